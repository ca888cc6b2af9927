//! Time integration of `u_t = Lu + G g(t)`.
//!
//! Four schemes share one right-hand side. Nonlinear trace data `g = ū^p`
//! is evaluated explicitly from the current stage. [`picard_solve`]
//! integrates the fixed-point form
//! `u(t) = u0 + ∫₀ᵗ (Lu + Gg) ds` directly and serves as a
//! scheme-independent oracle.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::geometry::BoundaryChart;
use crate::operators::{FluxOperator, NonlocalOperator};
use crate::scalar::{max_value, sup_norm};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryDatum<F> {
    /// `g(y, t) = h(y)`.
    Static { h: Vec<F> },
    /// `g(y, t) = h(y) (T - t)^(-α)`.
    PowerLaw { h: Vec<F>, blowup_time: F, alpha: F },
    /// `g(y, t) = f(ū(y, t))` with `f(s) = s^p`. With `floor = Some(δ)` the
    /// power is replaced by its secant below `δ`, which makes `f` Lipschitz.
    NonlinearTrace { p: F, chart: BoundaryChart<F>, floor: Option<F> },
    /// Piecewise-linear interpolation between tabulated collar fields.
    Tabulated { times: Vec<F>, fields: Vec<Vec<F>> },
}

impl<F: Real> BoundaryDatum<F> {
    pub fn zero(n_collar: usize) -> Self {
        BoundaryDatum::Static { h: vec![F::zero(); n_collar] }
    }

    /// Checks the datum against the collar size.
    pub fn validate(&self, n_collar: usize) -> Result<()> {
        let check = |name: &str, v: &[F]| {
            if v.len() != n_collar {
                return Err(Error::Usage(format!(
                    "{name} has {} collar values, expected {n_collar}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Usage(format!("{name} has non-finite values")));
            }
            Ok(())
        };
        match self {
            BoundaryDatum::Static { h } => check("static datum", h),
            BoundaryDatum::PowerLaw { h, blowup_time, alpha } => {
                check("power-law datum", h)?;
                if !(*blowup_time > F::zero()) || !(*alpha > F::zero()) {
                    return Err(Error::Config("power-law datum needs T > 0 and alpha > 0".into()));
                }
                if h.iter().any(|&x| x < F::zero()) {
                    return Err(Error::Config("power-law datum needs h >= 0".into()));
                }
                Ok(())
            }
            BoundaryDatum::NonlinearTrace { p, chart, floor } => {
                if chart.entries.len() != n_collar {
                    return Err(Error::Usage("boundary chart does not match the collar".into()));
                }
                if !(*p > F::zero()) {
                    return Err(Error::Config(format!("trace exponent must be positive, got {p}")));
                }
                if let Some(f) = floor {
                    if !(*f > F::zero()) {
                        return Err(Error::Config("regularization floor must be positive".into()));
                    }
                }
                Ok(())
            }
            BoundaryDatum::Tabulated { times, fields } => {
                if times.is_empty() || times.len() != fields.len() {
                    return Err(Error::Usage("tabulated datum needs one field per time".into()));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Usage("tabulated times must increase strictly".into()));
                }
                fields.iter().try_for_each(|f| check("tabulated field", f))
            }
        }
    }

    pub fn blowup_time(&self) -> Option<F> {
        match self {
            BoundaryDatum::PowerLaw { blowup_time, .. } => Some(*blowup_time),
            _ => None,
        }
    }

    pub fn trace_exponent(&self) -> Option<F> {
        match self {
            BoundaryDatum::NonlinearTrace { p, .. } => Some(*p),
            _ => None,
        }
    }

    /// Collar values `g(·, t)` given the current interior field.
    pub fn collar_values(&self, t: F, u: &[F]) -> Vec<F> {
        match self {
            BoundaryDatum::Static { h } => h.clone(),
            BoundaryDatum::PowerLaw { h, blowup_time, alpha } => {
                let s = (*blowup_time - t).powf(-*alpha);
                h.iter().map(|&v| v * s).collect()
            }
            BoundaryDatum::NonlinearTrace { p, chart, floor } => extend_trace(chart, u)
                .into_iter()
                .map(|s| trace_nonlinearity(s, *p, *floor))
                .collect(),
            BoundaryDatum::Tabulated { times, fields } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    fields[0].clone()
                } else if k == times.len() {
                    fields[k - 1].clone()
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    fields[k - 1]
                        .iter()
                        .zip(&fields[k])
                        .map(|(&a, &b)| a + w * (b - a))
                        .collect()
                }
            }
        }
    }

    fn depends_on_state(&self) -> bool {
        matches!(self, BoundaryDatum::NonlinearTrace { .. })
    }
}

/// `s^p` for `s ≥ floor`, the secant through the origin below; negative
/// traces contribute nothing.
pub fn trace_nonlinearity<F: Real>(s: F, p: F, floor: Option<F>) -> F {
    match floor {
        Some(f) if s < f => {
            if s <= F::zero() {
                F::zero()
            } else {
                f.powf(p) * s / f
            }
        }
        _ => s.max(F::zero()).powf(p),
    }
}

/// `ū[y] = u[trace cell of z(y)]` for every collar cell.
pub fn extend_trace<F: Real>(chart: &BoundaryChart<F>, u: &[F]) -> Vec<F> {
    chart.entries.iter().map(|e| u[e.trace]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk4,
    /// Exponential Euler from the representation formula.
    Exponential,
    /// Fixed-point iteration on each step interval.
    Picard,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            "exponential" | "exp" => Ok(Scheme::Exponential),
            "picard" => Ok(Scheme::Picard),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<F> {
    pub scheme: Scheme,
    pub dt: F,
    pub t_end: F,
    /// Sup-norm above which the run stops with a blow-up event.
    pub blowup_threshold: F,
    pub adaptive: bool,
    /// `c_a` in `dt ← min(dt, c_a·(T − t))`; for trace data the local time
    /// scale `‖u‖^(1−p)` replaces `T − t`.
    pub adaptive_fraction: F,
    pub snapshot_stride: usize,
    /// Trapezoid nodes per step for the Picard scheme.
    pub picard_substeps: usize,
}

impl<F: Real> Default for SolverConfig<F> {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            dt: F::lit(1e-3),
            t_end: F::one(),
            blowup_threshold: F::lit(1e8),
            adaptive: false,
            adaptive_fraction: F::lit(0.05),
            snapshot_stride: 1,
            picard_substeps: 8,
        }
    }
}

impl<F: Real> SolverConfig<F> {
    pub fn new(scheme: Scheme, dt: F, t_end: F) -> Self {
        Self { scheme, dt, t_end, ..Self::default() }
    }

    pub fn adaptive(mut self, fraction: F) -> Self {
        self.adaptive = true;
        self.adaptive_fraction = fraction;
        self
    }

    pub fn with_threshold(mut self, threshold: F) -> Self {
        self.blowup_threshold = threshold;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupTrigger {
    /// Sup-norm crossed the configured threshold.
    Threshold,
    /// A step produced non-finite values.
    NonFinite,
    /// The run reached the singular time of a power-law datum with the sup
    /// norm still growing over the final decade of `T − t`.
    Divergence,
    /// The adaptive step fell below the resolution of the clock.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEvent<F> {
    pub blowup_time_estimate: F,
    pub trigger: BlowupTrigger,
    pub last_stable_time: F,
    pub last_dt: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<F> {
    pub times: Vec<F>,
    pub snapshots: Vec<Vec<F>>,
    pub mass: Vec<F>,
    pub supnorm: Vec<F>,
    /// `∫₀ᵗ Σ_x vol·(Gg)` accumulated with the scheme's own quadrature.
    pub flux_integral: Vec<F>,
    /// `∫₀ᵗ max_x (Gg)`, the majorant of the sup bound.
    pub flux_sup_integral: Vec<F>,
    /// Time and sup-norm after every accepted step, including `t = 0`.
    pub step_times: Vec<F>,
    pub step_supnorm: Vec<F>,
    pub event: Option<BlowupEvent<F>>,
}

impl<F: Real> Trajectory<F> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> F {
        *self.times.last().expect("trajectory has the initial snapshot")
    }

    pub fn final_snapshot(&self) -> &[F] {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    /// Index of the snapshot whose time is closest to `t`.
    pub fn nearest_index(&self, t: F) -> usize {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            0
        } else if k == self.times.len() {
            k - 1
        } else if (self.times[k] - t).abs() < (t - self.times[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }
}

/// Step result with the flux bookkeeping needed for the mass identity.
#[derive(Debug, Clone)]
pub struct StepRecord<F> {
    pub u: Vec<F>,
    /// Scheme-weighted `Σ_x vol·(Gg)` over the step, already multiplied by `dt`.
    pub flux_mass: F,
    /// Scheme-weighted `max_x (Gg)` over the step, multiplied by `dt`.
    pub flux_sup: F,
}

struct Rhs<'a, F: Real> {
    op: &'a NonlocalOperator<F>,
    flux: &'a FluxOperator<F>,
    datum: &'a BoundaryDatum<F>,
    static_gg: Option<Vec<F>>,
}

impl<'a, F: Real> Rhs<'a, F> {
    fn new(op: &'a NonlocalOperator<F>, flux: &'a FluxOperator<F>, datum: &'a BoundaryDatum<F>) -> Result<Self> {
        if flux.n_interior() != op.len() {
            return usage("flux operator and diffusion operator sizes differ");
        }
        datum.validate(flux.n_collar())?;
        let static_gg = match datum {
            BoundaryDatum::Static { h } => Some(flux.apply(h)?),
            _ => None,
        };
        Ok(Self { op, flux, datum, static_gg })
    }

    fn flux_term(&self, t: F, u: &[F]) -> Result<Vec<F>> {
        match &self.static_gg {
            Some(gg) => Ok(gg.clone()),
            None => self.flux.apply(&self.datum.collar_values(t, u)),
        }
    }

    /// Returns `(Lu + Gg, Gg)`.
    fn eval(&self, t: F, u: &[F]) -> Result<(Vec<F>, Vec<F>)> {
        let gg = self.flux_term(t, u)?;
        let mut du = self.op.apply_l(u)?;
        for (d, &g) in du.iter_mut().zip(&gg) {
            *d += g;
        }
        Ok((du, gg))
    }
}

fn axpy<F: Real>(u: &[F], a: F, v: &[F]) -> Vec<F> {
    u.iter().zip(v).map(|(&x, &y)| x + a * y).collect()
}

fn check_finite<F: Real>(u: &[F], t: F) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Overflow { time: t.as_f64() })
    }
}

/// One step of `scheme` from `(t, u)`.
pub fn step<F: Real>(
    scheme: Scheme,
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    datum: &BoundaryDatum<F>,
    u: &[F],
    t: F,
    dt: F,
) -> Result<Vec<F>> {
    let rhs = Rhs::new(op, flux, datum)?;
    Ok(step_with(&rhs, scheme, u, t, dt, 8)?.u)
}

/// Like [`step`], also returning the flux bookkeeping.
pub fn step_detailed<F: Real>(
    scheme: Scheme,
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    datum: &BoundaryDatum<F>,
    u: &[F],
    t: F,
    dt: F,
) -> Result<StepRecord<F>> {
    let rhs = Rhs::new(op, flux, datum)?;
    step_with(&rhs, scheme, u, t, dt, 8)
}

fn step_with<F: Real>(
    rhs: &Rhs<'_, F>,
    scheme: Scheme,
    u: &[F],
    t: F,
    dt: F,
    picard_substeps: usize,
) -> Result<StepRecord<F>> {
    if !(dt > F::zero()) {
        return usage(format!("time step must be positive, got {dt}"));
    }
    if u.len() != rhs.op.len() {
        return usage(format!("field has {} entries, expected {}", u.len(), rhs.op.len()));
    }
    let op = rhs.op;
    let half = F::lit(0.5);
    let record = match scheme {
        Scheme::Euler => {
            let (du, gg) = rhs.eval(t, u)?;
            StepRecord {
                u: axpy(u, dt, &du),
                flux_mass: dt * op.mass(&gg),
                flux_sup: dt * max_value(&gg),
            }
        }
        Scheme::Rk4 => {
            let (k1, g1) = rhs.eval(t, u)?;
            let (k2, g2) = rhs.eval(t + half * dt, &axpy(u, half * dt, &k1))?;
            let (k3, g3) = rhs.eval(t + half * dt, &axpy(u, half * dt, &k2))?;
            let (k4, g4) = rhs.eval(t + dt, &axpy(u, dt, &k3))?;
            let two = F::lit(2.0);
            let sixth = dt / F::lit(6.0);
            let next = (0..u.len())
                .map(|i| u[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
                .collect();
            let gmass = op.mass(&g1) + two * op.mass(&g2) + two * op.mass(&g3) + op.mass(&g4);
            let gsup = max_value(&g1) + two * max_value(&g2) + two * max_value(&g3) + max_value(&g4);
            StepRecord { u: next, flux_mass: sixth * gmass, flux_sup: sixth * gsup }
        }
        Scheme::Exponential => {
            let gg = rhs.flux_term(t, u)?;
            let wu = op.apply_w(u)?;
            let mut weighted = Vec::with_capacity(u.len());
            let next = (0..u.len())
                .map(|i| {
                    let a = op.a[i];
                    let decay = (-a * dt).exp();
                    let gain = (F::one() - decay) / a;
                    weighted.push(gain * gg[i]);
                    decay * u[i] + gain * (wu[i] + gg[i])
                })
                .collect();
            StepRecord {
                u: next,
                flux_mass: op.mass(&weighted),
                flux_sup: max_value(&weighted),
            }
        }
        Scheme::Picard => {
            let window = picard_window(rhs, u, t, dt, picard_substeps.max(1))?;
            StepRecord { u: window.u, flux_mass: window.flux_mass, flux_sup: window.flux_sup }
        }
    };
    check_finite(&record.u, t + dt)?;
    Ok(record)
}

/// Result of the fixed-point construction on `[t_start, t_start + horizon]`.
#[derive(Debug, Clone)]
pub struct PicardSolution<F> {
    pub u: Vec<F>,
    /// Iterations in the last window.
    pub iterations: usize,
    /// Successive differences `max_t ‖w_{k+1}(t) − w_k(t)‖_{L¹}` of the last window.
    pub differences: Vec<F>,
    /// `C·t₀` with `C = 2·max A + 1`.
    pub contraction_factor: F,
    pub windows: usize,
}

struct PicardWindow<F> {
    u: Vec<F>,
    iterations: usize,
    differences: Vec<F>,
    flux_mass: F,
    flux_sup: F,
}

pub const PICARD_TOLERANCE: f64 = 1e-10;
pub const PICARD_MAX_ITERATIONS: usize = 10_000;

/// Discrete contraction constant `C = 2·max A + 1`.
pub fn picard_constant<F: Real>(op: &NonlocalOperator<F>) -> F {
    F::lit(2.0) * op.max_a() + F::one()
}

fn picard_window<F: Real>(
    rhs: &Rhs<'_, F>,
    u0: &[F],
    t_start: F,
    horizon: F,
    substeps: usize,
) -> Result<PicardWindow<F>> {
    let c = picard_constant(rhs.op);
    if !(c * horizon < F::one()) {
        return usage(format!(
            "Picard window {horizon} not contractive: C·t0 = {} >= 1",
            c * horizon
        ));
    }
    let n = u0.len();
    let tau = horizon / F::from_usize_lossy(substeps);
    let nodes: Vec<F> = (0..=substeps).map(|k| t_start + tau * F::from_usize_lossy(k)).collect();
    let half = F::lit(0.5);
    let tol = F::lit(PICARD_TOLERANCE);
    let mut w: Vec<Vec<F>> = vec![u0.to_vec(); substeps + 1];
    let mut differences = Vec::new();
    for iteration in 1..=PICARD_MAX_ITERATIONS {
        let mut integrands = Vec::with_capacity(substeps + 1);
        let mut fluxes = Vec::with_capacity(substeps + 1);
        for (k, wk) in w.iter().enumerate() {
            let (du, gg) = rhs.eval(nodes[k], wk)?;
            integrands.push(du);
            fluxes.push(gg);
        }
        let mut next = Vec::with_capacity(substeps + 1);
        next.push(u0.to_vec());
        let mut acc = u0.to_vec();
        for k in 0..substeps {
            for i in 0..n {
                acc[i] += half * tau * (integrands[k][i] + integrands[k + 1][i]);
            }
            next.push(acc.clone());
        }
        let diff = w
            .iter()
            .zip(&next)
            .map(|(a, b)| {
                rhs.op.vol.iter().zip(a.iter().zip(b)).map(|(&v, (&x, &y))| v * (x - y).abs()).sum::<F>()
            })
            .fold(F::zero(), |m, v| m.max(v));
        w = next;
        differences.push(diff);
        if !diff.is_finite() {
            return Err(Error::Overflow { time: (t_start + horizon).as_f64() });
        }
        if diff < tol {
            let mut flux_mass = F::zero();
            let mut flux_sup = F::zero();
            for k in 0..substeps {
                flux_mass += half * tau * (rhs.op.mass(&fluxes[k]) + rhs.op.mass(&fluxes[k + 1]));
                flux_sup += half * tau * (max_value(&fluxes[k]) + max_value(&fluxes[k + 1]));
            }
            return Ok(PicardWindow {
                u: w.pop().expect("nonempty time grid"),
                iterations: iteration,
                differences,
                flux_mass,
                flux_sup,
            });
        }
    }
    Err(Error::Numerical(format!(
        "Picard iteration did not converge in {PICARD_MAX_ITERATIONS} iterations"
    )))
}

/// Fixed-point solution at `t_start + t0` on a trapezoid grid of `substeps`
/// intervals. Requires `C·t0 < 1`.
pub fn picard_solve<F: Real>(
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    datum: &BoundaryDatum<F>,
    u0: &[F],
    t_start: F,
    t0: F,
    substeps: usize,
) -> Result<PicardSolution<F>> {
    picard_solve_horizon(op, flux, datum, u0, t_start, t0, t0, substeps)
}

/// Re-anchors the fixed-point construction at `t0, 2t0, …` to reach `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve_horizon<F: Real>(
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    datum: &BoundaryDatum<F>,
    u0: &[F],
    t_start: F,
    horizon: F,
    t0: F,
    substeps: usize,
) -> Result<PicardSolution<F>> {
    if substeps == 0 || !(t0 > F::zero()) || !(horizon > F::zero()) {
        return usage("Picard solve needs positive window, horizon and substeps");
    }
    if u0.len() != op.len() {
        return usage("initial field size mismatch");
    }
    let rhs = Rhs::new(op, flux, datum)?;
    let windows = (horizon / t0).ceil().to_f64().unwrap_or(1.0).max(1.0) as usize;
    let width = horizon / F::from_usize_lossy(windows);
    let mut u = u0.to_vec();
    let mut last = None;
    for k in 0..windows {
        let start = t_start + width * F::from_usize_lossy(k);
        let win = picard_window(&rhs, &u, start, width, substeps)?;
        u = win.u.clone();
        last = Some(win);
    }
    let last = last.expect("at least one window");
    Ok(PicardSolution {
        u,
        iterations: last.iterations,
        differences: last.differences,
        contraction_factor: picard_constant(op) * width,
        windows,
    })
}

/// Least-squares power-law fit `M ≈ C (T − t)^(−γ)` through the last three
/// points, solved for `T > t₃` by bisection. Falls back to the last time.
pub fn extrapolate_blowup_time<F: Real>(times: &[F], values: &[F]) -> F {
    let n = times.len();
    let Some(&t_last) = times.last() else {
        return F::zero();
    };
    if n < 3 {
        return t_last;
    }
    let (t1, t2, t3) = (times[n - 3], times[n - 2], times[n - 1]);
    let (m1, m2, m3) = (values[n - 3], values[n - 2], values[n - 1]);
    if !(m1 > F::zero() && m2 > m1 && m3 > m2 && t1 < t2 && t2 < t3) {
        return t_last;
    }
    let lhs = (m2.ln() - m1.ln()) / (m3.ln() - m2.ln());
    let ratio = |tt: F| ((tt - t1).ln() - (tt - t2).ln()) / ((tt - t2).ln() - (tt - t3).ln());
    let limit = (t2 - t1) / (t3 - t2);
    if !(lhs > F::zero() && lhs < limit) {
        return t_last;
    }
    // ratio increases from 0 (T → t₃) to `limit` (T → ∞)
    let mut lo = F::zero();
    let mut hi = (t3 - t1).max(F::min_positive_value());
    while ratio(t3 + hi) < lhs {
        hi = hi * F::lit(2.0);
        if hi > F::lit(1e12) {
            return t_last;
        }
    }
    for _ in 0..200 {
        let mid = half_way(lo, hi);
        if ratio(t3 + mid) < lhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t3 + half_way(lo, hi)
}

fn half_way<F: Real>(a: F, b: F) -> F {
    a + (b - a) * F::lit(0.5)
}

/// Growth exponent of the sup norm over the last decade of `T − t` above
/// which a run that reached a power-law singular time is classified as
/// blowing up, provided the growth persists (see [`DIVERGENCE_PERSISTENCE`]).
pub const DIVERGENCE_GROWTH: f64 = 0.02;

/// Minimum ratio of last-decade to previous-decade growth. Bounded
/// solutions approach their limit and lose growth geometrically; power and
/// logarithmic blow-up keep it.
pub const DIVERGENCE_PERSISTENCE: f64 = 0.45;

/// Integrates to `t_end` or until a blow-up trigger fires.
pub fn run<F: Real>(
    op: &NonlocalOperator<F>,
    flux: &FluxOperator<F>,
    datum: &BoundaryDatum<F>,
    u0: &[F],
    cfg: &SolverConfig<F>,
) -> Result<Trajectory<F>> {
    let rhs = Rhs::new(op, flux, datum)?;
    if u0.len() != op.len() {
        return usage(format!("initial field has {} entries, expected {}", u0.len(), op.len()));
    }
    if u0.iter().any(|x| !x.is_finite()) {
        return usage("initial field has non-finite values");
    }
    if !(cfg.dt > F::zero()) || !(cfg.t_end > F::zero()) {
        return Err(Error::Config("dt and t_end must be positive".into()));
    }
    if cfg.scheme == Scheme::Euler && cfg.dt * op.max_a() > F::one() {
        return Err(Error::Config(format!(
            "euler stability violated: dt·max A = {} > 1",
            cfg.dt * op.max_a()
        )));
    }
    if !(cfg.blowup_threshold > sup_norm(u0)) {
        return Err(Error::Config("blow-up threshold must exceed the initial sup norm".into()));
    }
    if cfg.snapshot_stride == 0 {
        return Err(Error::Config("snapshot stride must be at least 1".into()));
    }
    if cfg.adaptive && !(cfg.adaptive_fraction > F::zero()) {
        return Err(Error::Config("adaptive fraction must be positive".into()));
    }
    if let Some(big_t) = datum.blowup_time() {
        if !(cfg.t_end < big_t) {
            return Err(Error::Config(format!(
                "t_end = {} must stop before the singular time T = {big_t}",
                cfg.t_end
            )));
        }
    }
    if datum.depends_on_state() && u0.iter().any(|&x| x < F::zero()) {
        return Err(Error::Config("trace nonlinearity needs a nonnegative initial field".into()));
    }

    let mut traj = Trajectory {
        times: vec![F::zero()],
        snapshots: vec![u0.to_vec()],
        mass: vec![op.mass(u0)],
        supnorm: vec![sup_norm(u0)],
        flux_integral: vec![F::zero()],
        flux_sup_integral: vec![F::zero()],
        step_times: vec![F::zero()],
        step_supnorm: vec![sup_norm(u0)],
        event: None,
    };
    let mut u = u0.to_vec();
    let mut t = F::zero();
    let mut flux_total = F::zero();
    let mut flux_sup_total = F::zero();
    let mut steps = 0usize;
    let mut last_dt = cfg.dt;
    let snap_tol = cfg.t_end * F::lit(1e-12);
    let max_steps = 50_000_000usize;

    while t < cfg.t_end - snap_tol {
        let mut dt = cfg.dt;
        if cfg.adaptive {
            if let Some(big_t) = datum.blowup_time() {
                dt = dt.min(cfg.adaptive_fraction * (big_t - t));
            }
            if let Some(p) = datum.trace_exponent() {
                if p > F::one() {
                    let scale = sup_norm(&u).max(F::one());
                    dt = dt.min(cfg.adaptive_fraction * scale.powf(F::one() - p));
                }
            }
        }
        if t + dt > cfg.t_end - snap_tol {
            dt = cfg.t_end - t;
        }
        if t + dt == t {
            traj.event = Some(BlowupEvent {
                blowup_time_estimate: extrapolate_blowup_time(&traj.step_times, &traj.step_supnorm),
                trigger: BlowupTrigger::StepUnderflow,
                last_stable_time: t,
                last_dt,
            });
            push_snapshot(&mut traj, op, t, &u, flux_total, flux_sup_total);
            return Ok(traj);
        }
        let record = match step_with(&rhs, cfg.scheme, &u, t, dt, cfg.picard_substeps) {
            Ok(r) => r,
            Err(Error::Overflow { .. }) => {
                traj.event = Some(BlowupEvent {
                    blowup_time_estimate: extrapolate_blowup_time(&traj.step_times, &traj.step_supnorm),
                    trigger: BlowupTrigger::NonFinite,
                    last_stable_time: t,
                    last_dt,
                });
                push_snapshot(&mut traj, op, t, &u, flux_total, flux_sup_total);
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        u = record.u;
        t = if (cfg.t_end - (t + dt)).abs() <= snap_tol { cfg.t_end } else { t + dt };
        flux_total += record.flux_mass;
        flux_sup_total += record.flux_sup;
        last_dt = dt;
        steps += 1;
        let sup = sup_norm(&u);
        traj.step_times.push(t);
        traj.step_supnorm.push(sup);
        if sup > cfg.blowup_threshold {
            push_snapshot(&mut traj, op, t, &u, flux_total, flux_sup_total);
            traj.event = Some(BlowupEvent {
                blowup_time_estimate: extrapolate_blowup_time(&traj.step_times, &traj.step_supnorm),
                trigger: BlowupTrigger::Threshold,
                last_stable_time: t,
                last_dt,
            });
            return Ok(traj);
        }
        if steps % cfg.snapshot_stride == 0 || t >= cfg.t_end - snap_tol {
            push_snapshot(&mut traj, op, t, &u, flux_total, flux_sup_total);
        }
        if steps > max_steps {
            return Err(Error::Numerical(format!("step budget of {max_steps} exhausted at t = {t}")));
        }
    }
    if *traj.times.last().unwrap() < t {
        push_snapshot(&mut traj, op, t, &u, flux_total, flux_sup_total);
    }
    if let Some(big_t) = datum.blowup_time() {
        if let Some((last, prev)) = final_decade_growth(&traj.step_times, &traj.step_supnorm, big_t) {
            if last >= F::lit(DIVERGENCE_GROWTH) && last >= F::lit(DIVERGENCE_PERSISTENCE) * prev {
                traj.event = Some(BlowupEvent {
                    blowup_time_estimate: big_t,
                    trigger: BlowupTrigger::Divergence,
                    last_stable_time: t,
                    last_dt,
                });
            }
        }
    }
    Ok(traj)
}

/// `(log₁₀(M(τ_f)/M(10τ_f)), log₁₀(M(10τ_f)/M(100τ_f)))` with `τ = T − t`,
/// read from the step log; `None` when the log does not span two decades.
pub fn final_decade_growth<F: Real>(times: &[F], values: &[F], big_t: F) -> Option<(F, F)> {
    let t_f = *times.last()?;
    let tau_f = big_t - t_f;
    let at = |factor: f64| -> Option<F> {
        let target = big_t - F::lit(factor) * tau_f;
        if target < times[0] {
            return None;
        }
        let k = times.partition_point(|&s| s < target).min(times.len() - 1);
        Some(values[k])
    };
    let (m_f, m_1, m_2) = (*values.last()?, at(10.0)?, at(100.0)?);
    if !(m_2 > F::zero() && m_1 > F::zero() && m_f > F::zero()) {
        return None;
    }
    Some(((m_f / m_1).log10(), (m_1 / m_2).log10()))
}

fn push_snapshot<F: Real>(
    traj: &mut Trajectory<F>,
    op: &NonlocalOperator<F>,
    t: F,
    u: &[F],
    flux_total: F,
    flux_sup_total: F,
) {
    if traj.times.last() == Some(&t) {
        return;
    }
    traj.times.push(t);
    traj.snapshots.push(u.to_vec());
    traj.mass.push(op.mass(u));
    traj.supnorm.push(sup_norm(u));
    traj.flux_integral.push(flux_total);
    traj.flux_sup_integral.push(flux_sup_total);
}

/// `max_t |M(t) − M(0) − ∫₀ᵗ flux| / (1 + |M(t)|)`.
pub fn mass_balance_check<F: Real>(traj: &Trajectory<F>) -> F {
    let m0 = traj.mass[0];
    traj.mass
        .iter()
        .zip(&traj.flux_integral)
        .map(|(&m, &f)| (m - m0 - f).abs() / (F::one() + m.abs()))
        .fold(F::zero(), |a, b| a.max(b))
}

/// `max_{t,x} (u − v)₊` for two runs on a shared time grid.
pub fn comparison_check<F: Real>(u: &Trajectory<F>, v: &Trajectory<F>) -> Result<F> {
    if u.times.len() != v.times.len() {
        return usage("trajectories have different snapshot counts");
    }
    let mut worst = F::zero();
    for k in 0..u.times.len() {
        let scale = F::one() + u.times[k].abs();
        if (u.times[k] - v.times[k]).abs() > F::lit(1e-12) * scale {
            return usage(format!("snapshot {k} times differ"));
        }
        if u.snapshots[k].len() != v.snapshots[k].len() {
            return usage("trajectories live on different grids");
        }
        for (&a, &b) in u.snapshots[k].iter().zip(&v.snapshots[k]) {
            worst = worst.max(a - b);
        }
    }
    Ok(worst)
}

/// Worst excess of `max_x u(t)` over `max u0 + ∫₀ᵗ max_x (Gg) ds`.
pub fn sup_bound_check<F: Real>(traj: &Trajectory<F>) -> F {
    let top0 = max_value(&traj.snapshots[0]);
    traj.snapshots
        .iter()
        .zip(&traj.flux_sup_integral)
        .map(|(u, &majorant)| max_value(u) - (top0 + majorant))
        .fold(F::zero(), |a, b| a.max(b))
}
