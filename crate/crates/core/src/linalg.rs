//! Small dense kernels: cyclic Jacobi eigensolver and least-squares lines.

use crate::error::{Error, Result};
use crate::Real;

/// Dense symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<F> {
    /// Ascending.
    pub values: Vec<F>,
    /// `vectors[k]` is the unit eigenvector of `values[k]`.
    pub vectors: Vec<Vec<F>>,
}

pub const DENSE_LIMIT: usize = 1600;

/// Cyclic Jacobi rotations; `m` must be symmetric.
pub fn symmetric_eigen<F: Real>(mut m: Vec<Vec<F>>) -> Result<SymmetricEigen<F>> {
    let n = m.len();
    if n > DENSE_LIMIT {
        return Err(Error::Numerical(format!(
            "dense eigensolve limited to {DENSE_LIMIT} unknowns, got {n}"
        )));
    }
    let mut v = vec![vec![F::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = F::one();
    }
    let scale = m.iter().flatten().fold(F::zero(), |s, &x| s.max(x.abs())).max(F::min_positive_value());
    let tol = F::epsilon() * scale * F::lit(1e-2);
    let mut converged = n < 2;
    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .fold(F::zero(), |s, (p, q)| s.max(m[p][q].abs()));
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= tol {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k][p];
                    let akq = m[k][q];
                    m[k][p] = c * akp - s * akq;
                    m[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p][k];
                    let aqk = m[q][k];
                    m[p][k] = c * apk - s * aqk;
                    m[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi eigensolver did not converge".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[a][a].partial_cmp(&m[b][b]).unwrap());
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = order.iter().map(|&k| v.iter().map(|row| row[k]).collect()).collect();
    Ok(SymmetricEigen { values, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<F> {
    pub slope: F,
    pub intercept: F,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r2: F,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn fit_line<F: Real>(xs: &[F], ys: &[F]) -> Result<LineFit<F>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Diagnostic(format!(
            "line fit needs at least two paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = F::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<F>() / n;
    let my = ys.iter().copied().sum::<F>() / n;
    let sxx: F = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: F = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let syy: F = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if !(sxx > F::zero()) {
        return Err(Error::Diagnostic("line fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > F::zero() { (sxy * sxy / (sxx * syy)).min(F::one()).max(F::zero()) } else { F::one() };
    Ok(LineFit { slope, intercept, r2 })
}
