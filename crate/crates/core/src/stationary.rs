//! Stationary problem `0 = Lφ + Gh` through its second-kind form
//! `(I − K)φ = b`.
//!
//! `I − K` is self-adjoint and positive semi-definite for `⟨·,·⟩_μ` with a
//! one-dimensional kernel of constants on connected masks. Conjugate
//! gradients run on the μ-orthogonal complement of the constants; the mass
//! constraint is applied afterwards as a shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::linalg::{fit_line, symmetric_eigen};
use crate::operators::{FluxOperator, FredholmPair};
use crate::scalar::sup_norm;
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution<F> {
    pub phi: Vec<F>,
    pub target_mass: F,
    /// `‖Lφ + Gh‖∞`.
    pub residual: F,
    /// `Σ vol·(Gh)`.
    pub compat: F,
    pub iterations: usize,
}

/// Relative factor in the compatibility tolerance `factor · h_grid`.
pub const COMPAT_FACTOR: f64 = 10.0;

/// Relative μ-norm reduction at which conjugate gradients stop.
pub const CG_TOLERANCE: f64 = 1e-14;

/// Largest admissible net flux for a given cell size, relative to the gross
/// flux `Σ vol·G|h|`.
pub fn compat_tolerance<F: Real>(cell_size: F) -> F {
    F::lit(COMPAT_FACTOR) * cell_size
}

fn project_constants<F: Real>(pair: &FredholmPair<F>, v: &mut [F], mu_total: F) {
    let mean = pair.mu_weights.iter().zip(v.iter()).map(|(&w, &x)| w * x).sum::<F>() / mu_total;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Solves the stationary problem with `Σ vol·φ = target_mass`.
///
/// `h` is refused when its net flux exceeds
/// `compat_tolerance(cell_size) · Σ vol·G|h|`.
pub fn solve_stationary<F: Real>(
    pair: &FredholmPair<F>,
    flux: &FluxOperator<F>,
    h: &[F],
    target_mass: F,
    cell_size: F,
) -> Result<StationarySolution<F>> {
    let vol = &pair.op.vol;
    let compat = flux.compat_residual(vol, h)?;
    let abs_h: Vec<F> = h.iter().map(|v| v.abs()).collect();
    let gross = flux.compat_residual(vol, &abs_h)?;
    let tolerance = compat_tolerance(cell_size) * gross;
    if compat.abs() > tolerance {
        return Err(Error::Incompatible { residual: compat.as_f64(), tolerance: tolerance.as_f64() });
    }
    let n = pair.len();
    let mu_total: F = pair.mu_weights.iter().copied().sum();
    let mut b = pair.rhs(flux, h)?;
    project_constants(pair, &mut b, mu_total);

    let apply = |x: &[F]| -> Result<Vec<F>> {
        let kx = pair.apply_k(x)?;
        Ok(x.iter().zip(&kx).map(|(&a, &k)| a - k).collect())
    };
    let mut x = vec![F::zero(); n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = pair.inner_mu(&r, &r);
    let stop = F::lit(CG_TOLERANCE).powi(2) * rr.max(F::min_positive_value());
    let max_iter = 20 * n + 100;
    let mut iterations = 0;
    while rr > stop && iterations < max_iter {
        let mut ap = apply(&p)?;
        project_constants(pair, &mut ap, mu_total);
        let pap = pair.inner_mu(&p, &ap);
        if !(pap > F::zero()) {
            return Err(Error::Numerical(format!(
                "stationary operator not positive on the complement of constants (pᵀAp = {pap})"
            )));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = pair.inner_mu(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    if rr > stop && rr.sqrt() > F::lit(1e-10) {
        return Err(Error::Numerical(format!(
            "conjugate gradients did not converge in {max_iter} iterations (residual {})",
            rr.sqrt()
        )));
    }
    let volume: F = vol.iter().copied().sum();
    let mass = pair.op.mass(&x);
    let shift = (target_mass - mass) / volume;
    for v in x.iter_mut() {
        *v += shift;
    }
    let residual = stationary_residual(pair, flux, &x, h)?;
    Ok(StationarySolution { phi: x, target_mass, residual, compat, iterations })
}

/// `‖Lφ + Gh‖∞`.
pub fn stationary_residual<F: Real>(
    pair: &FredholmPair<F>,
    flux: &FluxOperator<F>,
    phi: &[F],
    h: &[F],
) -> Result<F> {
    let mut lphi = pair.op.apply_l(phi)?;
    let gh = flux.apply(h)?;
    for (l, &g) in lphi.iter_mut().zip(&gh) {
        *l += g;
    }
    Ok(sup_norm(&lphi))
}

/// `1 − λ₂(K)`: positive iff the eigenvalue 1 of `K` is simple.
pub fn kernel_simplicity_check<F: Real>(pair: &FredholmPair<F>) -> Result<F> {
    let eig = symmetric_eigen(pair.symmetric_matrix())?;
    let n = eig.values.len();
    if n < 2 {
        return Err(Error::Numerical("kernel gap needs at least two cells".into()));
    }
    Ok(F::one() - eig.values[n - 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit<F> {
    /// Fitted rate `r` in `‖u − φ‖² ≈ C e^{−rt}`.
    pub rate: F,
    /// Rate of the unsquared norm, `r / 2`.
    pub rate_unsquared: F,
    pub r2: F,
    pub window: (F, F),
    pub points: usize,
    pub beta: F,
    /// `r ≥ 0.95 β`.
    pub meets_bound: bool,
}

/// Fits the exponential decay of `‖u(t) − φ‖²_{L²}` over the window where
/// it lies in `[1e−8, 1e−1]` times its initial value. Returns `None` when
/// the initial distance is already zero.
pub fn convergence_verify<F: Real>(
    traj: &Trajectory<F>,
    sol: &StationarySolution<F>,
    vol: &[F],
    beta: F,
) -> Result<Option<DecayFit<F>>> {
    let dist: Vec<F> = traj
        .snapshots
        .iter()
        .map(|u| {
            u.iter()
                .zip(&sol.phi)
                .zip(vol)
                .map(|((&a, &b), &w)| w * (a - b) * (a - b))
                .sum::<F>()
        })
        .collect();
    let h0 = dist[0];
    if h0 == F::zero() {
        return Ok(None);
    }
    let (lo, hi) = (F::lit(1e-8) * h0, F::lit(1e-1) * h0);
    let (ts, ys): (Vec<F>, Vec<F>) = traj
        .times
        .iter()
        .zip(&dist)
        .filter(|(_, &v)| v >= lo && v <= hi)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    if ts.len() < 3 {
        return Err(Error::Diagnostic(format!(
            "decay window holds {} snapshots; no decay observed",
            ts.len()
        )));
    }
    let fit = fit_line(&ts, &ys)?;
    let rate = -fit.slope;
    Ok(Some(DecayFit {
        rate,
        rate_unsquared: rate * F::lit(0.5),
        r2: fit.r2,
        window: (ts[0], *ts.last().unwrap()),
        points: ts.len(),
        beta,
        meets_bound: rate >= F::lit(0.95) * beta,
    }))
}
