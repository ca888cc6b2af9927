//! On-disk operator cache.
//!
//! Layout: one UTF-8 JSON header line terminated by `\n`, followed by the
//! little-endian payload sections listed in the header, in order:
//!
//! ```text
//! w_row_ptr  u64 × (n_interior + 1)
//! w_cols     u64 × w_nnz
//! w_vals     f64 × w_nnz
//! vol        f64 × n_interior
//! g_row_ptr  u64 × (n_interior + 1)
//! g_cols     u64 × g_nnz
//! g_vals     f64 × g_nnz
//! ```

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Csr, FluxOperator, NonlocalOperator};
use crate::error::{Error, Result};
use crate::Real;

pub const FORMAT_NAME: &str = "nlflux-operators";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorHeader {
    pub format: String,
    pub version: u32,
    pub n_interior: usize,
    pub n_collar: usize,
    pub w_nnz: usize,
    pub g_nnz: usize,
    pub alpha_min: f64,
    pub sections: Vec<String>,
}

fn put_u64s(out: &mut impl Write, v: &[usize]) -> Result<()> {
    for &x in v {
        out.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

fn put_f64s<F: Real>(out: &mut impl Write, v: &[F]) -> Result<()> {
    for &x in v {
        out.write_all(&x.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn get_u64s(inp: &mut impl Read, n: usize) -> Result<Vec<usize>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            inp.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf) as usize)
        })
        .collect()
}

fn get_f64s<F: Real>(inp: &mut impl Read, n: usize) -> Result<Vec<F>> {
    let mut buf = [0u8; 8];
    (0..n)
        .map(|_| {
            inp.read_exact(&mut buf)?;
            Ok(F::lit(f64::from_le_bytes(buf)))
        })
        .collect()
}

pub fn write_operators<F: Real>(
    out: &mut impl Write,
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
) -> Result<()> {
    let header = OperatorHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        n_interior: op.len(),
        n_collar: flux.n_collar(),
        w_nnz: op.w.nnz(),
        g_nnz: flux.g.nnz(),
        alpha_min: op.alpha_min.as_f64(),
        sections: ["w_row_ptr", "w_cols", "w_vals", "vol", "g_row_ptr", "g_cols", "g_vals"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    put_u64s(out, &op.w.row_ptr)?;
    put_u64s(out, &op.w.cols)?;
    put_f64s(out, &op.w.vals)?;
    put_f64s(out, &op.vol)?;
    put_u64s(out, &flux.g.row_ptr)?;
    put_u64s(out, &flux.g.cols)?;
    put_f64s(out, &flux.g.vals)?;
    Ok(())
}

pub fn read_operators<F: Real>(
    inp: &mut impl BufRead,
) -> Result<(NonlocalOperator<F>, FluxOperator<F>)> {
    let mut line = String::new();
    inp.read_line(&mut line)?;
    let header: OperatorHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(e.to_string()))?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported operator file {} v{}",
            header.format, header.version
        )));
    }
    let n = header.n_interior;
    let w = Csr {
        n_rows: n,
        n_cols: n,
        row_ptr: get_u64s(inp, n + 1)?,
        cols: get_u64s(inp, header.w_nnz)?,
        vals: get_f64s(inp, header.w_nnz)?,
    };
    let vol = get_f64s(inp, n)?;
    let g = Csr {
        n_rows: n,
        n_cols: header.n_collar,
        row_ptr: get_u64s(inp, n + 1)?,
        cols: get_u64s(inp, header.g_nnz)?,
        vals: get_f64s(inp, header.g_nnz)?,
    };
    if w.row_ptr.last() != Some(&header.w_nnz) || g.row_ptr.last() != Some(&header.g_nnz) {
        return Err(Error::Format("row pointer table inconsistent with header".into()));
    }
    if w.cols.iter().any(|&c| c >= n) || g.cols.iter().any(|&c| c >= header.n_collar) {
        return Err(Error::Format("column index out of range".into()));
    }
    Ok((NonlocalOperator::from_csr(w, vol)?, FluxOperator::from_csr(g)))
}
