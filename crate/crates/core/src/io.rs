//! Text artifacts: trajectory series, field files and JSON reports.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! value read back is bit-identical to the one written.
//!
//! Series file:
//!
//! ```text
//! # nlflux series v1
//! # columns: time mass supnorm flux_integral flux_sup_integral lyapunov
//! 0e0 1.5e0 ...
//! ```
//!
//! The `lyapunov` column holds `nan` when no functional was computed.
//!
//! Field file:
//!
//! ```text
//! # nlflux field v1
//! # label: phi
//! # grid: dim=1 nx=30 ny=1 h=5e-2 x0=-3e-1 y0=0e0
//! # columns: ordinal grid_index x y value
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::geometry::Geometry;
use crate::Real;

pub const SERIES_HEADER: &str = "# nlflux series v1";
pub const SERIES_COLUMNS: &str =
    "# columns: time mass supnorm flux_integral flux_sup_integral lyapunov";
pub const FIELD_HEADER: &str = "# nlflux field v1";

/// Shortest representation that parses back to the same value.
pub fn fmt_real<F: Real>(x: F) -> String {
    format!("{:e}", x.as_f64())
}

fn parse_real<F: Real>(tok: &str, line: usize) -> Result<F> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse number `{tok}`")))?;
    Ok(F::lit(v))
}

pub fn series_text<F: Real>(traj: &Trajectory<F>, lyapunov: Option<&[F]>) -> Result<String> {
    if let Some(l) = lyapunov {
        if l.len() != traj.len() {
            return Err(Error::Usage("lyapunov series length differs from the trajectory".into()));
        }
    }
    let mut out = String::new();
    out.push_str(SERIES_HEADER);
    out.push('\n');
    out.push_str(SERIES_COLUMNS);
    out.push('\n');
    for k in 0..traj.len() {
        let lyap = lyapunov.map_or_else(|| "nan".to_string(), |l| fmt_real(l[k]));
        writeln!(
            out,
            "{} {} {} {} {} {}",
            fmt_real(traj.times[k]),
            fmt_real(traj.mass[k]),
            fmt_real(traj.supnorm[k]),
            fmt_real(traj.flux_integral[k]),
            fmt_real(traj.flux_sup_integral[k]),
            lyap
        )
        .expect("writing to a String");
    }
    Ok(out)
}

pub fn write_series<F: Real>(path: &Path, traj: &Trajectory<F>, lyapunov: Option<&[F]>) -> Result<()> {
    fs::write(path, series_text(traj, lyapunov)?)?;
    Ok(())
}

/// One row of a series file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub time: f64,
    pub mass: f64,
    pub supnorm: f64,
    pub flux_integral: f64,
    pub flux_sup_integral: f64,
    pub lyapunov: f64,
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == SERIES_HEADER => {}
        _ => return Err(Error::Format("missing series header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let v = line
            .split_whitespace()
            .map(|t| parse_real::<f64>(t, i + 1))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != 6 {
            return Err(Error::Format(format!("line {}: expected 6 columns, got {}", i + 1, v.len())));
        }
        rows.push(SeriesRow {
            time: v[0],
            mass: v[1],
            supnorm: v[2],
            flux_integral: v[3],
            flux_sup_integral: v[4],
            lyapunov: v[5],
        });
    }
    Ok(rows)
}

pub fn field_text<F: Real>(geom: &Geometry<F>, label: &str, field: &[F]) -> Result<String> {
    if field.len() != geom.n_interior() {
        return Err(Error::Usage(format!(
            "field has {} values, geometry has {} interior cells",
            field.len(),
            geom.n_interior()
        )));
    }
    let g = &geom.grid;
    let mut out = String::new();
    out.push_str(FIELD_HEADER);
    out.push('\n');
    writeln!(out, "# label: {label}").unwrap();
    writeln!(
        out,
        "# grid: dim={} nx={} ny={} h={} x0={} y0={}",
        g.dim,
        g.shape[0],
        g.shape[1],
        fmt_real(g.cell_size),
        fmt_real(g.origin[0]),
        fmt_real(g.origin[1])
    )
    .unwrap();
    out.push_str("# columns: ordinal grid_index x y value\n");
    for (o, &v) in field.iter().enumerate() {
        let idx = geom.mask.interior[o];
        let c = g.center(idx);
        writeln!(out, "{o} {idx} {} {} {}", fmt_real(c[0]), fmt_real(c[1]), fmt_real(v)).unwrap();
    }
    Ok(out)
}

pub fn write_field<F: Real>(path: &Path, geom: &Geometry<F>, label: &str, field: &[F]) -> Result<()> {
    fs::write(path, field_text(geom, label, field)?)?;
    Ok(())
}

/// Values of a field file in ordinal order.
pub fn read_field(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    if text.lines().next() != Some(FIELD_HEADER) {
        return Err(Error::Format("missing field header".into()));
    }
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(Error::Format(format!("line {}: expected 5 columns", i + 1)));
        }
        let ordinal: usize = toks[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad ordinal", i + 1)))?;
        if ordinal != values.len() {
            return Err(Error::Format(format!("line {}: ordinals out of order", i + 1)));
        }
        values.push(parse_real::<f64>(toks[4], i + 1)?);
    }
    Ok(values)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
