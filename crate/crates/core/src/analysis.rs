//! Post-processing of operators and trajectories.
//!
//! * the J-Poincaré constant `β` by a dense eigensolve and by a matrix-free
//!   locally optimal Rayleigh-quotient descent,
//! * the Lyapunov functional of static-flux runs,
//! * blow-up profiles `w_i`, `w̃_i` on the strips and power/log rate fits,
//! * blow-up set reconstruction,
//! * diagnostics for the nonlinear trace flux `g = ū^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::evolution::{
    run, BoundaryDatum, Scheme, SolverConfig, Trajectory, DIVERGENCE_GROWTH, DIVERGENCE_PERSISTENCE,
};
use crate::geometry::{BoundaryChart, Geometry, StripDecomposition};
use crate::linalg::{fit_line, symmetric_eigen};
use crate::operators::{FluxOperator, NonlocalOperator};
use crate::scalar::{max_value, sup_norm};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport<F> {
    /// Dense eigensolve of the form matrix restricted to mean-zero fields.
    pub beta: F,
    /// Smallest nonzero eigenvalue of `−L` in the volume-weighted product.
    pub lambda1: F,
    /// Minimum over random starts of the Rayleigh-quotient descent.
    pub beta_descent: F,
    /// `|β − β_descent| / β`.
    pub method_agreement: F,
    /// `false` when `β` vanishes to working accuracy: the mask has more than
    /// one kernel-connected component.
    pub connected: bool,
    pub descent_iterations: usize,
}

/// Number of random starts of the descent method.
pub const DESCENT_STARTS: usize = 10;

/// Computes `β = min Q(u)/‖u‖²` over `Σ vol·u = 0` in two independent ways.
pub fn poincare_constant<F: Real>(op: &NonlocalOperator<F>, seed: u64) -> Result<SpectralReport<F>> {
    let n = op.len();
    if n < 2 {
        return usage("spectral constant needs at least two cells");
    }
    let m = op.form_matrix();
    let sq: Vec<F> = op.vol.iter().map(|v| v.sqrt()).collect();
    let mut s = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = (m[i][j] + m[j][i]) * F::lit(0.5) / (sq[i] * sq[j]);
        }
    }
    // unrestricted spectrum of −L: λ₀ = 0 (constants), λ₁ next
    let full = symmetric_eigen(s.clone())?;
    let lambda1 = full.values[1];

    // restriction to mean-zero fields: lift the constant direction far above
    // the spectrum so the minimum is attained on its complement
    let total: F = op.vol.iter().copied().sum();
    let q: Vec<F> = sq.iter().map(|&v| v / total.sqrt()).collect();
    let lift = F::lit(4.0) * op.max_a() + F::one();
    for i in 0..n {
        for j in 0..n {
            s[i][j] += lift * q[i] * q[j];
        }
    }
    let restricted = symmetric_eigen(s)?;
    let beta = F::lit(2.0) * restricted.values[0];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = F::infinity();
    let mut iterations = 0;
    for _ in 0..DESCENT_STARTS {
        let x0: Vec<F> = (0..n).map(|_| F::lit(rng.gen_range(-1.0..1.0))).collect();
        let (lam, it) = rayleigh_descent(op, x0)?;
        iterations += it;
        best = best.min(lam);
    }
    let beta_descent = F::lit(2.0) * best;
    let connected = beta > F::lit(1e-9) * op.max_a();
    let method_agreement = if beta > F::zero() {
        (beta - beta_descent).abs() / beta
    } else {
        (beta - beta_descent).abs()
    };
    Ok(SpectralReport {
        beta,
        lambda1,
        beta_descent,
        method_agreement,
        connected,
        descent_iterations: iterations,
    })
}

/// Eigenfield of `−L` for `λ₁`, normalized to `Σ vol·v² = 1`. Mean zero,
/// so `φ + c·v` decays to `φ` at exactly `e^{−λ₁ t}`.
pub fn slowest_mode<F: Real>(op: &NonlocalOperator<F>) -> Result<Vec<F>> {
    let n = op.len();
    if n < 2 {
        return usage("slowest mode needs at least two cells");
    }
    let m = op.form_matrix();
    let sq: Vec<F> = op.vol.iter().map(|v| v.sqrt()).collect();
    let mut s = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = (m[i][j] + m[j][i]) * F::lit(0.5) / (sq[i] * sq[j]);
        }
    }
    let eig = symmetric_eigen(s)?;
    Ok(eig.vectors[1].iter().zip(&sq).map(|(&e, &r)| e / r).collect())
}

fn project_mean<F: Real>(op: &NonlocalOperator<F>, u: &mut [F], total: F) {
    let mean = op.mass(u) / total;
    for x in u.iter_mut() {
        *x -= mean;
    }
}

fn neg_l<F: Real>(op: &NonlocalOperator<F>, u: &[F]) -> Result<Vec<F>> {
    Ok(op.apply_l(u)?.into_iter().map(|v| -v).collect())
}

/// Locally optimal block-free Rayleigh descent for the smallest eigenvalue
/// of `−L` on volume-weighted mean-zero fields. Returns `(λ, iterations)`.
fn rayleigh_descent<F: Real>(op: &NonlocalOperator<F>, mut x: Vec<F>) -> Result<(F, usize)> {
    let total: F = op.vol.iter().copied().sum();
    let tol = F::lit(1e-11) * op.max_a();
    let max_iter = 20_000;
    let normalize = |v: &mut Vec<F>| -> F {
        let nrm = op.inner(v, v).sqrt();
        if nrm > F::zero() {
            for e in v.iter_mut() {
                *e /= nrm;
            }
        }
        nrm
    };
    project_mean(op, &mut x, total);
    if normalize(&mut x) == F::zero() {
        return Err(Error::Numerical("descent start has no mean-zero component".into()));
    }
    let mut p: Option<Vec<F>> = None;
    let mut lam = op.inner(&x, &neg_l(op, &x)?);
    for it in 1..=max_iter {
        let ax = neg_l(op, &x)?;
        lam = op.inner(&x, &ax);
        let mut r: Vec<F> = ax.iter().zip(&x).map(|(&a, &b)| a - lam * b).collect();
        project_mean(op, &mut r, total);
        let rn = op.inner(&r, &r).sqrt();
        if rn <= tol {
            return Ok((lam, it));
        }
        let mut basis = vec![x.clone()];
        for cand in std::iter::once(r).chain(p.clone()) {
            let mut v = cand;
            for _ in 0..2 {
                for b in &basis {
                    let c = op.inner(&v, b);
                    for (e, &bb) in v.iter_mut().zip(b) {
                        *e -= c * bb;
                    }
                }
            }
            project_mean(op, &mut v, total);
            let scale = op.inner(&v, &v).sqrt();
            if scale > F::lit(1e-13) {
                for e in v.iter_mut() {
                    *e /= scale;
                }
                basis.push(v);
            }
        }
        let k = basis.len();
        let images: Vec<Vec<F>> = basis.iter().map(|b| neg_l(op, b)).collect::<Result<_>>()?;
        let mut h = vec![vec![F::zero(); k]; k];
        for i in 0..k {
            for j in 0..k {
                h[i][j] = op.inner(&basis[i], &images[j]);
            }
        }
        for i in 0..k {
            for j in 0..i {
                let avg = (h[i][j] + h[j][i]) * F::lit(0.5);
                h[i][j] = avg;
                h[j][i] = avg;
            }
        }
        let eig = symmetric_eigen(h)?;
        let c = &eig.vectors[0];
        let mut next = vec![F::zero(); x.len()];
        let mut dir = vec![F::zero(); x.len()];
        for (i, b) in basis.iter().enumerate() {
            for (e, &bb) in next.iter_mut().zip(b) {
                *e += c[i] * bb;
            }
            if i > 0 {
                for (e, &bb) in dir.iter_mut().zip(b) {
                    *e += c[i] * bb;
                }
            }
        }
        normalize(&mut next);
        x = next;
        p = if normalize(&mut dir) > F::zero() { Some(dir) } else { None };
    }
    // accept a stagnated iterate when the eigenvalue itself has settled
    let ax = neg_l(op, &x)?;
    let lam_final = op.inner(&x, &ax);
    if (lam_final - lam).abs() <= F::lit(1e-12) * op.max_a() {
        Ok((lam_final, max_iter))
    } else {
        Err(Error::Numerical(format!("Rayleigh descent did not converge in {max_iter} iterations")))
    }
}

/// `F(u) = ¼ Q(u) − Σ vol·(Gh)·u`.
pub fn lyapunov_value<F: Real>(op: &NonlocalOperator<F>, gh: &[F], u: &[F]) -> F {
    F::lit(0.25) * op.dirichlet_form(u) - op.inner(gh, u)
}

/// `F` at every snapshot of a static-flux run.
pub fn lyapunov_series<F: Real>(
    traj: &Trajectory<F>,
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    h: &[F],
) -> Result<Vec<F>> {
    let gh = flux.apply(h)?;
    Ok(traj.snapshots.iter().map(|u| lyapunov_value(op, &gh, u)).collect())
}

/// Largest increase `F(t_{k+1}) − F(t_k)` (zero when nonincreasing).
pub fn lyapunov_max_increase<F: Real>(values: &[F]) -> F {
    values.windows(2).map(|w| w[1] - w[0]).fold(F::zero(), |m, v| m.max(v))
}

/// `max_k |ΔF/Δt + c·Σ vol·(Δu/Δt)²|` between consecutive snapshots.
///
/// Along exact solutions `dF/dt = −Σ vol·u_t²`, so `c = 1` is the
/// dissipation identity of the discrete functional.
pub fn dissipation_residual<F: Real>(
    traj: &Trajectory<F>,
    values: &[F],
    vol: &[F],
    coefficient: F,
) -> F {
    let mut worst = F::zero();
    for k in 0..traj.times.len().saturating_sub(1) {
        let dt = traj.times[k + 1] - traj.times[k];
        let df = (values[k + 1] - values[k]) / dt;
        let diss: F = traj.snapshots[k + 1]
            .iter()
            .zip(&traj.snapshots[k])
            .zip(vol)
            .map(|((&a, &b), &w)| {
                let ut = (a - b) / dt;
                w * ut * ut
            })
            .sum();
        worst = worst.max((df + coefficient * diss).abs());
    }
    worst
}

/// Limiting blow-up profiles on the strips.
///
/// `w[i-1]` is `w_i` for `1 ≤ i < α` and `w_tilde[i-1]` is `w̃_i` for
/// `1 ≤ i ≤ α`, each restricted to `B_i` (zero elsewhere). The recursion
/// integrates `w_{i−1}` over `B_{i−1}`, the only part of `ℝᴺ \ Ω_i` within
/// kernel range of `B_i` where the rescaled solution converges to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles<F> {
    pub w: Vec<Vec<F>>,
    pub w_tilde: Vec<Vec<F>>,
    pub strips: StripDecomposition,
    pub alpha: F,
}

impl<F: Real> Profiles<F> {
    /// `w_i`; a usage error in the logarithmic case `α = i` or past the last
    /// available strip.
    pub fn w(&self, i: usize) -> Result<&[F]> {
        if i == 0 {
            return usage("profiles are indexed from 1");
        }
        if self.alpha == F::from_usize_lossy(i) {
            return usage(format!("w_{i} is undefined for alpha = {i}; use the logarithmic profile"));
        }
        self.w
            .get(i - 1)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Usage(format!("w_{i} not available (alpha = {}, {} strips)", self.alpha, self.strips.len())))
    }

    pub fn w_tilde(&self, i: usize) -> Result<&[F]> {
        if i == 0 {
            return usage("profiles are indexed from 1");
        }
        self.w_tilde
            .get(i - 1)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Usage(format!("w~_{i} not available")))
    }
}

fn restrict<F: Real>(v: &[F], cells: &[usize]) -> Vec<F> {
    let mut out = vec![F::zero(); v.len()];
    for &c in cells {
        out[c] = v[c];
    }
    out
}

pub fn compute_profiles<F: Real>(
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    strips: &StripDecomposition,
    h: &[F],
    alpha: F,
) -> Result<Profiles<F>> {
    if !(alpha > F::zero()) {
        return usage("alpha must be positive");
    }
    let mut w = Vec::new();
    let mut w_tilde = Vec::new();
    if alpha >= F::one() && !strips.is_empty() {
        let mut integral = restrict(&flux.apply(h)?, strips.strip(1));
        let mut i = 1;
        loop {
            let fi = F::from_usize_lossy(i);
            w_tilde.push(integral.clone());
            if fi >= alpha {
                break;
            }
            let wi: Vec<F> = integral.iter().map(|&v| v / (alpha - fi)).collect();
            w.push(wi.clone());
            i += 1;
            if i > strips.len() || F::from_usize_lossy(i) > alpha {
                break;
            }
            integral = restrict(&op.apply_w(&wi)?, strips.strip(i));
        }
    }
    Ok(Profiles { w, w_tilde, strips: strips.clone(), alpha })
}

/// Initial field that already carries the singular expansion of the
/// power-law solution at `t = 0`: `Σ_{i<α} T^{−(α−i)} w_i`, plus
/// `−ln T · w̃_α` when `α` is an integer. Starting from it removes the
/// `O(1)` transient that otherwise masks the leading exponents on
/// desk-scale fit windows.
pub fn matched_initial<F: Real>(profiles: &Profiles<F>, blowup_time: F) -> Vec<F> {
    let n = profiles.strips.residual(0).len();
    let mut u0 = vec![F::zero(); n];
    for (k, w) in profiles.w.iter().enumerate() {
        let s = blowup_time.powf(-(profiles.alpha - F::from_usize_lossy(k + 1)));
        for (u, &v) in u0.iter_mut().zip(w) {
            *u += v * s;
        }
    }
    if profiles.alpha.fract() == F::zero() {
        if let Some(wt) = profiles.alpha.to_usize().and_then(|i| profiles.w_tilde.get(i.wrapping_sub(1))) {
            let s = -blowup_time.ln();
            for (u, &v) in u0.iter_mut().zip(wt) {
                *u += v * s;
            }
        }
    }
    u0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Slope of `ln max u` against `−ln(T − t)`.
    Power,
    /// Slope of `max u` against `−ln(T − t)`.
    Log,
}

/// Window in `T − t` used by every rate fit.
pub const FIT_WINDOW: (f64, f64) = (1e-4, 1e-1);
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit<F> {
    pub region: Vec<usize>,
    pub exponent: F,
    pub intercept: F,
    pub r2: F,
    /// Times `(t_lo, t_hi)` of the first and last fitted snapshot.
    pub window: (F, F),
    pub mode: FitMode,
    pub points: usize,
}

/// `max_{x ∈ region} u[x]`.
pub fn region_max<F: Real>(u: &[F], region: &[usize]) -> F {
    region.iter().map(|&c| u[c]).fold(F::neg_infinity(), |m, v| m.max(v))
}

pub fn rate_fit<F: Real>(traj: &Trajectory<F>, region: &[usize], big_t: F, mode: FitMode) -> Result<RateFit<F>> {
    rate_fit_window(traj, region, big_t, mode, (F::lit(FIT_WINDOW.0), F::lit(FIT_WINDOW.1)))
}

pub fn rate_fit_window<F: Real>(
    traj: &Trajectory<F>,
    region: &[usize],
    big_t: F,
    mode: FitMode,
    window: (F, F),
) -> Result<RateFit<F>> {
    if region.is_empty() {
        return usage("rate fit over an empty region");
    }
    let slack = F::lit(1e-6);
    let (lo, hi) = (window.0 * (F::one() - slack), window.1 * (F::one() + slack));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        let tau = big_t - t;
        if !(tau > F::zero()) || tau < lo || tau > hi {
            continue;
        }
        let m = region_max(&traj.snapshots[k], region);
        let y = match mode {
            FitMode::Power => {
                if !(m > F::zero()) {
                    return Err(Error::Diagnostic(format!(
                        "power fit needs positive values, got {m} at t = {t}"
                    )));
                }
                m.ln()
            }
            FitMode::Log => m,
        };
        xs.push(-tau.ln());
        ys.push(y);
        ts.push(t);
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Diagnostic(format!(
            "fit window holds {} snapshots, need {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &ys)?;
    Ok(RateFit {
        region: region.to_vec(),
        exponent: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        window: (ts[0], *ts.last().unwrap()),
        mode,
        points: xs.len(),
    })
}

/// `max_{region} |(T − t)^e u(t) − w|` at the final snapshot.
pub fn profile_error<F: Real>(
    traj: &Trajectory<F>,
    region: &[usize],
    big_t: F,
    scale_exponent: F,
    profile: &[F],
) -> F {
    let tau = big_t - traj.final_time();
    let u = traj.final_snapshot();
    let s = tau.powf(scale_exponent);
    region.iter().map(|&c| (s * u[c] - profile[c]).abs()).fold(F::zero(), |m, v| m.max(v))
}

/// Relative change of `max_region u / (−ln(T − t))` over the last decade of
/// `T − t`.
pub fn log_ratio_change<F: Real>(traj: &Trajectory<F>, region: &[usize], big_t: F) -> F {
    let tau_f = big_t - traj.final_time();
    let k0 = traj.nearest_index(big_t - F::lit(10.0) * tau_f);
    let ratio = |k: usize| region_max(&traj.snapshots[k], region) / (-(big_t - traj.times[k]).ln());
    let (r0, r1) = (ratio(k0), ratio(traj.len() - 1));
    ((r1 - r0) / r1).abs()
}

/// Cell-wise divergence test on the last two decades of `T − t`.
///
/// With `g_k = log₁₀(u(τ_k) / u(10 τ_k))`, a cell is flagged when the last
/// decade shows `g ≥ min_growth` and the growth persists,
/// `g_last ≥ persistence · g_previous`. Power and logarithmic blow-up keep
/// their local growth while bounded cells approach their limit and lose it
/// geometrically; magnitude alone cannot separate the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCriterion<F> {
    pub min_growth: F,
    pub persistence: F,
}

impl<F: Real> Default for DivergenceCriterion<F> {
    fn default() -> Self {
        Self { min_growth: F::lit(DIVERGENCE_GROWTH), persistence: F::lit(DIVERGENCE_PERSISTENCE) }
    }
}

/// Cells diverging at `big_t` under `criterion`.
pub fn divergent_cells<F: Real>(
    traj: &Trajectory<F>,
    big_t: F,
    criterion: &DivergenceCriterion<F>,
) -> Result<Vec<usize>> {
    let tau_f = big_t - traj.final_time();
    if !(tau_f > F::zero()) {
        return Err(Error::Diagnostic("final snapshot is not before the blow-up time".into()));
    }
    let t100 = big_t - F::lit(100.0) * tau_f;
    if t100 < traj.times[0] {
        return Err(Error::Diagnostic(
            "trajectory does not span two decades of T - t".into(),
        ));
    }
    let k1 = traj.nearest_index(big_t - F::lit(10.0) * tau_f);
    let k2 = traj.nearest_index(t100);
    let (uf, u1, u2) = (traj.final_snapshot(), &traj.snapshots[k1], &traj.snapshots[k2]);
    let growth = |a: F, b: F| if a > F::zero() && b > F::zero() { (a / b).log10() } else { F::zero() };
    Ok((0..uf.len())
        .filter(|&c| {
            let g_last = growth(uf[c], u1[c]);
            let g_prev = growth(u1[c], u2[c]);
            g_last >= criterion.min_growth && g_last >= criterion.persistence * g_prev
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetComparison {
    pub estimated: Vec<usize>,
    pub expected: Vec<usize>,
    pub missing: Vec<usize>,
    pub extra: Vec<usize>,
    pub symmetric_difference: usize,
}

pub fn compare_cell_sets(estimated: &[usize], expected: &[usize]) -> SetComparison {
    let mut est = estimated.to_vec();
    let mut exp = expected.to_vec();
    est.sort_unstable();
    est.dedup();
    exp.sort_unstable();
    exp.dedup();
    let missing: Vec<usize> = exp.iter().filter(|c| est.binary_search(c).is_err()).copied().collect();
    let extra: Vec<usize> = est.iter().filter(|c| exp.binary_search(c).is_err()).copied().collect();
    let symmetric_difference = missing.len() + extra.len();
    SetComparison { estimated: est, expected: exp, missing, extra, symmetric_difference }
}

/// `∪_{1 ≤ i ≤ [α]} B_i`, empty for `α < 1`.
pub fn predicted_blowup_set<F: Real>(strips: &StripDecomposition, alpha: F) -> Vec<usize> {
    if alpha < F::one() {
        return Vec::new();
    }
    let m = alpha.floor().to_usize().unwrap_or(0);
    strips.union_upto(m)
}

/// Divergent cells of a power-law run compared against the strips.
/// Runs without a blow-up event yield an empty estimate.
pub fn blowup_set_estimate<F: Real>(
    traj: &Trajectory<F>,
    big_t: F,
    strips: &StripDecomposition,
    alpha: F,
    criterion: &DivergenceCriterion<F>,
) -> Result<SetComparison> {
    let estimated = if traj.event.is_some() { divergent_cells(traj, big_t, criterion)? } else { Vec::new() };
    Ok(compare_cell_sets(&estimated, &predicted_blowup_set(strips, alpha)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearRateReport<F> {
    pub p: F,
    pub blowup_time: F,
    /// Sup-norm exponent against the estimated `T`.
    pub fit: RateFit<F>,
    /// Exponents refitted with `T ∓ last dt`.
    pub exponent_band: (F, F),
    /// `1 / (p − 1)`.
    pub expected_exponent: F,
    /// Largest relative shortfall `(lower − ‖u‖∞) / lower` inside the window.
    pub lower_bound_violation: F,
    pub lower_bound_ok: bool,
}

/// `(p − 1)^{−1/(p−1)} (T − t)^{−1/(p−1)}`.
pub fn nonlinear_lower_bound<F: Real>(p: F, tau: F) -> F {
    let e = F::one() / (p - F::one());
    ((p - F::one()) * tau).powf(-e)
}

pub fn nonlinear_rate_check<F: Real>(traj: &Trajectory<F>, p: F) -> Result<NonlinearRateReport<F>> {
    if !(p > F::one()) {
        return usage(format!("rate check needs p > 1, got {p}"));
    }
    let event = traj.event.ok_or_else(|| {
        Error::Diagnostic(format!("no blow-up detected up to t = {}", traj.final_time()))
    })?;
    let big_t = event.blowup_time_estimate;
    let all: Vec<usize> = (0..traj.final_snapshot().len()).collect();
    let fit = rate_fit(traj, &all, big_t, FitMode::Power)?;
    let band_lo = rate_fit(traj, &all, big_t - event.last_dt, FitMode::Power).map(|f| f.exponent);
    let band_hi = rate_fit(traj, &all, big_t + event.last_dt, FitMode::Power).map(|f| f.exponent);
    let (a, b) = (band_lo.unwrap_or(fit.exponent), band_hi.unwrap_or(fit.exponent));
    let (lo, hi) = (F::lit(FIT_WINDOW.0), F::lit(FIT_WINDOW.1));
    let mut violation = F::neg_infinity();
    for (k, &t) in traj.times.iter().enumerate() {
        let tau = big_t - t;
        if tau >= lo && tau <= hi {
            let bound = nonlinear_lower_bound(p, tau);
            violation = violation.max((bound - sup_norm(&traj.snapshots[k])) / bound);
        }
    }
    Ok(NonlinearRateReport {
        p,
        blowup_time: big_t,
        exponent_band: (a.min(b), a.max(b)),
        expected_exponent: F::one() / (p - F::one()),
        lower_bound_violation: violation,
        lower_bound_ok: violation <= F::lit(0.05),
        fit,
    })
}

/// Spatially constant supersolution of the trace problem for `p ≤ 1`:
/// `C (t + 1)^{1/(1−p)}` with `C^{1−p}/(1−p) ≥ max B` for `p < 1`, and
/// `C e^{kt}` with `k = max(1, max B)` for `p = 1`; `C ≥ max u0` in both.
pub fn supersolution_envelope<F: Real>(p: F, max_b: F, max_u0: F, t: F) -> F {
    if p < F::one() {
        let q = F::one() - p;
        let c = max_u0.max((q * max_b).powf(F::one() / q));
        c * (t + F::one()).powf(F::one() / q)
    } else {
        max_u0 * (max_b.max(F::one()) * t).exp()
    }
}

/// `max_k ‖u(t_k)‖∞ / envelope(t_k)`; at most one when the bound holds.
pub fn supersolution_ratio<F: Real>(traj: &Trajectory<F>, p: F, flux: &FluxOperator<F>) -> Result<F> {
    if p > F::one() || !(p > F::zero()) {
        return usage("supersolution envelopes cover 0 < p <= 1");
    }
    let max_b = max_value(&flux.exterior_mass());
    let max_u0 = max_value(&traj.snapshots[0]);
    Ok(traj
        .snapshots
        .iter()
        .zip(&traj.times)
        .map(|(u, &t)| max_value(u) / supersolution_envelope(p, max_b, max_u0, t))
        .fold(F::zero(), |m, v| m.max(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearBlowupSet<F> {
    pub flagged: Vec<usize>,
    /// `K = [p/(p−1)]`.
    pub k: usize,
    pub collar_width: F,
    /// Boundary distance of the deepest flagged cell (zero when none).
    pub deepest: F,
    pub contained: bool,
}

pub fn nonlinear_blowup_set<F: Real>(
    traj: &Trajectory<F>,
    p: F,
    geom: &Geometry<F>,
    criterion: &DivergenceCriterion<F>,
) -> Result<NonlinearBlowupSet<F>> {
    if !(p > F::one()) {
        return usage(format!("blow-up set needs p > 1, got {p}"));
    }
    let event = traj.event.ok_or_else(|| Error::Diagnostic("no blow-up event recorded".into()))?;
    let flagged = divergent_cells(traj, event.blowup_time_estimate, criterion)?;
    let k = (p / (p - F::one())).floor().to_usize().unwrap_or(usize::MAX);
    let collar_width = F::from_usize_lossy(k) * geom.radius;
    let deepest = flagged.iter().map(|&c| geom.boundary_distance(c)).fold(F::zero(), |m, v| m.max(v));
    Ok(NonlinearBlowupSet { contained: deepest < collar_width, flagged, k, collar_width, deepest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonuniquenessReport<F> {
    pub p: F,
    pub t_star: F,
    /// Ascending.
    pub eps: Vec<F>,
    pub boundary_cells: Vec<usize>,
    /// `fields[k]` is `w_ε(t*)` for `eps[k]`.
    pub fields: Vec<Vec<F>>,
    /// Largest `(w_{ε₁} − w_{ε₂})₊` over `ε₁ < ε₂`.
    pub monotonicity_violation: F,
    /// Linear extrapolation `ε → 0` at the boundary cells.
    pub limit: Vec<F>,
    pub gamma: F,
    /// `γ ((1−p) t*)^{1/(1−p)}`.
    pub subsolution_value: F,
    /// `min(limit) − subsolution_value`.
    pub margin: F,
    pub above_subsolution: bool,
    /// `‖u(t*)‖∞` of the run from zero data with the unregularized flux.
    pub zero_solution_sup: F,
}

/// Regularized runs from `u0 ≡ ε` with `f_ε(s) = s^p` above `ε/2`, compared
/// against the subsolution `a(x) b(t)` with `b(t) = ((1−p)t)^{1/(1−p)}` and
/// `a = γ` on the trace cells. `γ^{1−p} = min B / (1 + max A (1−p) t*)`
/// makes `a b` a subsolution on `[0, t*]`.
pub fn nonuniqueness_probe<F: Real>(
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    chart: &BoundaryChart<F>,
    p: F,
    eps_ladder: &[F],
    t_star: F,
    dt: F,
) -> Result<NonuniquenessReport<F>> {
    if !(p > F::zero() && p < F::one()) {
        return usage(format!("non-uniqueness probe needs 0 < p < 1, got {p}"));
    }
    if eps_ladder.len() < 2 || eps_ladder.iter().any(|e| !(*e > F::zero())) {
        return usage("epsilon ladder needs at least two positive values");
    }
    let mut eps = eps_ladder.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = op.len();
    let cfg = SolverConfig::new(Scheme::Euler, dt, t_star).with_threshold(F::lit(1e12));
    let mut fields = Vec::with_capacity(eps.len());
    for &e in &eps {
        let datum = BoundaryDatum::NonlinearTrace { p, chart: chart.clone(), floor: Some(e * F::lit(0.5)) };
        let traj = run(op, flux, &datum, &vec![e; n], &cfg)?;
        fields.push(traj.final_snapshot().to_vec());
    }
    let mut violation = F::zero();
    for k in 0..fields.len() - 1 {
        for (&a, &b) in fields[k].iter().zip(&fields[k + 1]) {
            violation = violation.max(a - b);
        }
    }
    let boundary_cells = chart.trace_cells();
    let (e1, e2) = (eps[0], eps[1]);
    let limit: Vec<F> = boundary_cells
        .iter()
        .map(|&c| {
            let (w1, w2) = (fields[0][c], fields[1][c]);
            w1 - e1 * (w2 - w1) / (e2 - e1)
        })
        .collect();
    let b = flux.exterior_mass();
    let min_b = boundary_cells.iter().map(|&c| b[c]).fold(F::infinity(), |m, v| m.min(v));
    let q = F::one() - p;
    let gamma = (min_b / (F::one() + op.max_a() * q * t_star)).powf(F::one() / q);
    let subsolution_value = gamma * (q * t_star).powf(F::one() / q);
    let margin = limit.iter().fold(F::infinity(), |m, &v| m.min(v)) - subsolution_value;

    let zero_datum = BoundaryDatum::NonlinearTrace { p, chart: chart.clone(), floor: None };
    let zero = run(op, flux, &zero_datum, &vec![F::zero(); n], &cfg)?;
    Ok(NonuniquenessReport {
        p,
        t_star,
        eps,
        boundary_cells,
        fields,
        monotonicity_violation: violation,
        limit,
        gamma,
        subsolution_value,
        margin,
        above_subsolution: margin > F::zero(),
        zero_solution_sup: sup_norm(zero.final_snapshot()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, strip_decomposition, ShapeSpec};
    use crate::kernel::{Kernel, KernelFamily};
    use crate::operators::assemble;

    #[test]
    fn two_cell_beta_is_one() {
        let op =
            NonlocalOperator::from_kernel_matrix(&[vec![0.0f64, 0.5], vec![0.5, 0.0]], &[0.5, 0.5]).unwrap();
        let r = poincare_constant(&op, 1).unwrap();
        assert!((r.beta - 1.0).abs() < 1e-12);
        assert!((r.beta_descent - 1.0).abs() < 1e-12);
        assert!((r.lambda1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_field_has_zero_lyapunov_value() {
        let g = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.25, 0.05).unwrap();
        let k = Kernel::new(KernelFamily::Uniform, 0.25, 1).unwrap();
        let (op, flux) = assemble(&g, &k).unwrap();
        let gh = flux.apply(&vec![0.0; g.n_collar()]).unwrap();
        assert_eq!(lyapunov_value(&op, &gh, &vec![2.5; op.len()]), 0.0);
    }

    #[test]
    fn ladder_first_profile_is_linear_ramp() {
        let g = build_grid(ShapeSpec::<f64>::Interval { a: 0.0, b: 1.0 }, 0.25, 0.05).unwrap();
        let k = Kernel::new(KernelFamily::Uniform, 0.25, 1).unwrap();
        let (op, flux) = assemble(&g, &k).unwrap();
        let support = g.collar_where(|c| c[0] > 1.0);
        let h = g.collar_field(|c| if c[0] > 1.0 { 1.0 } else { 0.0 });
        let strips = strip_decomposition(&g, &support).unwrap();
        let prof = compute_profiles(&op, &flux, &strips, &h, 1.5).unwrap();
        assert_eq!(prof.w.len(), 1);
        for &c in strips.strip(1) {
            let x = g.interior_center(c)[0];
            assert!((prof.w[0][c] - 4.0 * (x - 0.75)).abs() < 5.0 * 0.05f64);
        }
        assert!(prof.w(1).is_ok() && prof.w(2).is_err());
        let int = compute_profiles(&op, &flux, &strips, &h, 2.0).unwrap();
        assert!(int.w(2).is_err());
        assert_eq!(int.w_tilde.len(), 2);
    }

    #[test]
    fn set_comparison_counts() {
        let c = compare_cell_sets(&[1, 2, 3, 9], &[2, 3, 4]);
        assert_eq!(c.missing, vec![4]);
        assert_eq!(c.extra, vec![1, 9]);
        assert_eq!(c.symmetric_difference, 3);
    }

    #[test]
    fn envelopes_are_supersolutions_of_the_mass_ode() {
        for &(p, b) in &[(0.5f64, 0.5), (0.3, 0.9), (1.0, 0.6)] {
            let v = |t: f64| supersolution_envelope(p, b, 1.0, t);
            for k in 0..100 {
                let t = k as f64 * 0.05;
                let dv = (v(t + 1e-6) - v(t - 1e-6)) / 2e-6;
                assert!(dv >= b * v(t).powf(p) * (1.0 - 1e-6), "p={p} t={t}");
            }
        }
    }
}
