//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with the measured quantities.
//!
//! Reference values come from oracles written here, independent of the
//! library code under test: dense pairwise kernel sums over cell centers,
//! closed-form continuum integrals, a `nalgebra` eigensolve and hand-rolled
//! least-squares fits. Run with `--nocapture` to see the report lines.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlflux::analysis::{
    blowup_set_estimate, nonlinear_blowup_set, nonlinear_rate_check, nonuniqueness_probe, poincare_constant,
    DivergenceCriterion,
};
use nlflux::evolution::{picard_solve, run, BoundaryDatum, Scheme, SolverConfig};
use nlflux::geometry::{build_boundary_chart, build_grid, Geometry, ShapeSpec};
use nlflux::kernel::{Kernel, KernelFamily};
use nlflux::operators::{assemble, FluxOperator, NonlocalOperator};
use nlflux::stationary::solve_stationary;
use nlflux::{Error, Trajectory64};
use nlflux_cli::presets;
use nlflux_cli::setup::{build, shape_spec, Experiment};

fn report(id: &str, pass: bool, detail: String) {
    println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn preset(name: &str) -> (nlflux_cli::ExperimentConfig, Experiment) {
    let cfg = presets::load(name).unwrap();
    let exp = build(&cfg, false).unwrap();
    (cfg, exp)
}

fn kernel_of(cfg: &nlflux_cli::ExperimentConfig) -> Kernel<f64> {
    let family: KernelFamily = cfg.kernel.family.parse().unwrap();
    Kernel::new(family, cfg.kernel.radius, shape_spec(cfg).dim()).unwrap()
}

fn sub(a: [f64; 2], b: [f64; 2], dim: usize) -> Vec<f64> {
    (0..dim).map(|k| a[k] - b[k]).collect()
}

/// Dense `J(x_c − y_c)` between interior cell centers.
fn dense_kernel(geom: &Geometry<f64>, k: &Kernel<f64>) -> Vec<Vec<f64>> {
    let c = geom.interior_centers();
    let dim = geom.dim();
    c.iter().map(|&x| c.iter().map(|&y| k.eval(&sub(x, y, dim)).unwrap()).collect()).collect()
}

/// `Σ_y J(x_c − y_c) vol h(y)` over collar cells, by direct summation.
fn exterior_sum(geom: &Geometry<f64>, k: &Kernel<f64>, h: &[f64]) -> Vec<f64> {
    let vol = geom.cell_volume();
    let dim = geom.dim();
    let coll: Vec<[f64; 2]> = (0..geom.n_collar()).map(|o| geom.collar_center(o)).collect();
    geom.interior_centers()
        .iter()
        .map(|&x| coll.iter().zip(h).map(|(&y, &hv)| k.eval(&sub(x, y, dim)).unwrap() * vol * hv).sum())
        .collect()
}

fn absorption(jm: &[Vec<f64>], vol: f64) -> Vec<f64> {
    jm.iter().map(|row| row.iter().sum::<f64>() * vol).collect()
}

/// Sorted spectrum of `−L` in the volume-weighted product, by nalgebra.
fn oracle_spectrum(jm: &[Vec<f64>], vol: f64) -> Vec<f64> {
    let n = jm.len();
    let a = absorption(jm, vol);
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { a[i] - jm[i][j] * vol } else { -jm[i][j] * vol });
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) })
}

fn region_max(u: &[f64], region: &[usize]) -> f64 {
    region.iter().map(|&c| u[c]).fold(f64::NEG_INFINITY, f64::max)
}

/// Power (`log = false`) or logarithmic fit of `max_region u` against
/// `−ln(T − t)` over `T − t ∈ [1e−4, 1e−1]`.
fn oracle_rate(traj: &Trajectory64, region: &[usize], big_t: f64, log: bool) -> (f64, f64, usize) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, &t) in traj.times.iter().enumerate() {
        let tau = big_t - t;
        if (1e-4 * (1.0 - 1e-9)..=1e-1).contains(&tau) {
            let m = region_max(&traj.snapshots[k], region);
            xs.push(-tau.ln());
            ys.push(if log { m } else { m.ln() });
        }
    }
    let (s, r2) = line_fit(&xs, &ys);
    (s, r2, xs.len())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn mass(u: &[f64], vol: f64) -> f64 {
    u.iter().sum::<f64>() * vol
}

fn run_exp(exp: &Experiment) -> Trajectory64 {
    run(&exp.op, &exp.flux, &exp.datum, &exp.u0, &exp.solver).unwrap()
}

/// `max_k |M_k − M_0 − ∫flux| / (1 + |M_k|)` with masses recomputed from the snapshots.
fn mass_residual(traj: &Trajectory64, vol: f64) -> f64 {
    let m0 = mass(&traj.snapshots[0], vol);
    traj.snapshots
        .iter()
        .zip(&traj.flux_integral)
        .map(|(u, f)| {
            let m = mass(u, vol);
            (m - m0 - f).abs() / (1.0 + m.abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_mass_identity() {
    let names = ["mass-identity", "mass-disk", "mass-rectangle", "mass-nonlinear", "mass-ladder-power"];
    let mut worst_flux: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut worst_simpson: f64 = 0.0;
    for name in names {
        let (cfg, mut exp) = preset(name);
        assert_eq!(exp.solver.scheme, Scheme::Rk4);
        assert_eq!(exp.solver.dt, 1e-3);
        let vol = exp.geom.cell_volume();
        let traj = run_exp(&exp);
        worst_flux = worst_flux.max(mass_residual(&traj, vol));

        // uniform steps: Simpson's rule over the snapshot fluxes is an
        // independent O(dt⁴) quadrature of ∫ Σ vol·G g
        let steps = traj.len() - 1;
        if !cfg.solver.adaptive && steps % 2 == 0 && exp.solver.snapshot_stride == 1 {
            let kernel = kernel_of(&cfg);
            let f: Vec<f64> = traj
                .times
                .iter()
                .zip(&traj.snapshots)
                .map(|(&t, u)| mass(&exterior_sum(&exp.geom, &kernel, &exp.datum.collar_values(t, u)), vol))
                .collect();
            let dt = traj.times[1] - traj.times[0];
            let simpson: f64 = (0..steps / 2)
                .map(|k| dt / 3.0 * (f[2 * k] + 4.0 * f[2 * k + 1] + f[2 * k + 2]))
                .sum();
            let m_end = mass(traj.final_snapshot(), vol);
            let m0 = mass(&traj.snapshots[0], vol);
            worst_simpson = worst_simpson.max((m_end - m0 - simpson).abs() / (1.0 + m_end.abs()));
        }

        exp.datum = BoundaryDatum::zero(exp.geom.n_collar());
        let closed = run_exp(&exp);
        worst_closed = worst_closed.max(mass_residual(&closed, vol));
    }
    report(
        "1",
        worst_flux < 1e-6 && worst_simpson < 1e-6 && worst_closed < 1e-10,
        format!(
            "5 presets: flux residual {worst_flux:.2e} (< 1e-6), Simpson cross-check {worst_simpson:.2e}, g = 0 residual {worst_closed:.2e} (< 1e-10)"
        ),
    );
}

#[test]
fn criterion_02_comparison_principle() {
    let line = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.2, 0.05).unwrap();
    let disk = build_grid(ShapeSpec::Disk { center: [0.0, 0.0], radius: 1.0 }, 0.4, 0.1).unwrap();
    let setups: Vec<(Geometry<f64>, NonlocalOperator<f64>, FluxOperator<f64>)> = [(line, 1), (disk, 2)]
        .into_iter()
        .map(|(g, dim)| {
            let k = Kernel::new(KernelFamily::Tent, g.radius, dim).unwrap();
            let (op, flux) = assemble(&g, &k).unwrap();
            (g, op, flux)
        })
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut max_dt_a: f64 = 0.0;
    for pair in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(pair);
        let (g, op, flux) = &setups[(pair % 2) as usize];
        let n = op.len();
        let nc = g.n_collar();
        let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let v0: Vec<f64> = u0.iter().map(|&x| x + rng.gen_range(0.0..1.0) * rng.gen_range(0.0..1.0f64).round()).collect();
        let hu: Vec<f64> = (0..nc).map(|_| rng.gen_range(0.0..1.0)).collect();
        let hv: Vec<f64> = hu.iter().map(|&x| x + rng.gen_range(0.0..0.5)).collect();
        let (du, dv) = match pair % 3 {
            0 => (BoundaryDatum::Static { h: hu.iter().map(|x| x - 0.5).collect() }, BoundaryDatum::Static {
                h: hv.iter().map(|x| x - 0.5).collect(),
            }),
            1 => (
                BoundaryDatum::PowerLaw { h: hu, blowup_time: 1.0, alpha: 0.8 },
                BoundaryDatum::PowerLaw { h: hv, blowup_time: 1.0, alpha: 0.8 },
            ),
            _ => {
                let chart = build_boundary_chart(g).unwrap();
                (
                    BoundaryDatum::NonlinearTrace { p: 2.0, chart: chart.clone(), floor: None },
                    BoundaryDatum::NonlinearTrace { p: 2.0, chart, floor: None },
                )
            }
        };
        let dt = 1e-2;
        max_dt_a = max_dt_a.max(dt * absorption(&dense_kernel(g, &Kernel::new(KernelFamily::Tent, g.radius, g.dim()).unwrap()), g.cell_volume()).iter().cloned().fold(0.0, f64::max));
        let cfg = SolverConfig::new(Scheme::Euler, dt, 0.2);
        let a = run(op, flux, &du, &u0, &cfg).unwrap();
        let b = run(op, flux, &dv, &v0, &cfg).unwrap();
        assert_eq!(a.times, b.times);
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            for (p, q) in x.iter().zip(y) {
                worst = worst.max(p - q);
            }
        }
    }
    report(
        "2",
        worst <= 1e-12 && max_dt_a <= 1.0,
        format!("100 ordered pairs (static, power-law, nonlinear), euler dt·max A = {max_dt_a:.3}: worst violation {worst:.2e} (≤ 1e-12)"),
    );
}

#[test]
fn criterion_03_picard_oracle() {
    let (cfg, exp) = preset("mass-identity");
    let t0 = 0.2;
    let rk = run(&exp.op, &exp.flux, &exp.datum, &exp.u0, &SolverConfig::new(Scheme::Rk4, 1e-3, t0)).unwrap();
    let pic = picard_solve(&exp.op, &exp.flux, &exp.datum, &exp.u0, 0.0, t0, 400).unwrap();
    let sup = rk.final_snapshot().iter().zip(&pic.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let jm = dense_kernel(&exp.geom, &kernel_of(&cfg));
    let max_a = absorption(&jm, exp.geom.cell_volume()).into_iter().fold(0.0, f64::max);
    let c = 2.0 * max_a + 1.0;
    let ratios: Vec<f64> = pic
        .differences
        .windows(2)
        .filter(|w| w[0] > 1e-13)
        .map(|w| w[1] / w[0])
        .collect();
    let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    report(
        "3",
        sup <= 1e-4 && worst_ratio <= c * t0 && pic.windows == 1,
        format!(
            "sup |picard − rk4| at t = 0.2: {sup:.2e} (≤ 1e-4); {} iterations, worst difference ratio {worst_ratio:.3e} ≤ C·t0 = {:.3}",
            pic.iterations,
            c * t0
        ),
    );
}

#[test]
fn criterion_04_stationary_solve() {
    // accepted solution: residual of a φ − Σ J φ vol − Σ J h vol by dense sums
    let (cfg, exp) = preset("stationary-antisymmetric");
    let kernel = kernel_of(&cfg);
    let vol = exp.geom.cell_volume();
    let sol = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, 0.0, exp.geom.grid.cell_size).unwrap();
    let jm = dense_kernel(&exp.geom, &kernel);
    let a = absorption(&jm, vol);
    let gh = exterior_sum(&exp.geom, &kernel, &exp.h);
    let residual = (0..sol.phi.len())
        .map(|x| {
            let wphi: f64 = jm[x].iter().zip(&sol.phi).map(|(j, p)| j * vol * p).sum();
            (a[x] * sol.phi[x] - wphi - gh[x]).abs()
        })
        .fold(0.0, f64::max);

    // refusal: one-sided h ≡ 1 on (1, 1.25]; the continuum net flux is
    // ∫₀¹∫₁^{1.25} J(x − y) dy dx, evaluated by a fine midpoint rule
    let (cfg1, one) = preset("stationary-one-sided");
    let k1 = kernel_of(&cfg1);
    let m = 2000;
    let (hx, hy) = (1.0 / m as f64, 0.25 / m as f64);
    let mut closed_form = 0.0;
    for i in 0..m {
        let x = (i as f64 + 0.5) * hx;
        for j in 0..m {
            let y = 1.0 + (j as f64 + 0.5) * hy;
            closed_form += k1.eval(&[x - y]).unwrap() * hx * hy;
        }
    }
    let refused = solve_stationary(&one.op.fredholm(), &one.flux, &one.h, 0.0, one.geom.grid.cell_size);
    let h_grid = one.geom.grid.cell_size;
    let (refusal_ok, reported) = match refused {
        Err(Error::Incompatible { residual, .. }) => ((residual - closed_form).abs() <= 5.0 * h_grid, residual),
        _ => (false, f64::NAN),
    };

    // two target masses differ by the constant (m₂ − m₁)/|Ω|
    let s1 = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, 0.3, h_grid).unwrap();
    let s2 = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, 1.7, h_grid).unwrap();
    let shift = (1.7 - 0.3) / (vol * s1.phi.len() as f64);
    let shift_err = s1.phi.iter().zip(&s2.phi).map(|(a, b)| (b - a - shift).abs()).fold(0.0, f64::max);

    report(
        "4",
        residual <= 1e-8 && refusal_ok && shift_err <= 1e-10,
        format!(
            "residual {residual:.2e} (≤ 1e-8); one-sided refused with residual {reported:.4} vs closed form {closed_form:.4} ± {:.2}; mass-shift error {shift_err:.2e} (≤ 1e-10)",
            5.0 * h_grid
        ),
    );
}

#[test]
fn criterion_05_spectral_constant() {
    let (cfg, exp) = preset("spectral-interval");
    let r = poincare_constant(&exp.op, cfg.seed).unwrap();
    let spectrum = oracle_spectrum(&dense_kernel(&exp.geom, &kernel_of(&cfg)), exp.geom.cell_volume());
    let oracle_beta = 2.0 * spectrum[1];
    let two = NonlocalOperator::from_kernel_matrix(&[vec![0.0, 0.5], vec![0.5, 0.0]], &[0.5, 0.5]).unwrap();
    let r2 = poincare_constant(&two, 1).unwrap();
    let hand: f64 = 4.0 * 0.5 * 0.5;
    let oracle_gap = (r.beta - oracle_beta).abs() / oracle_beta;
    report(
        "5",
        r.method_agreement < 1e-6
            && (r.beta - 2.0 * r.lambda1).abs() <= 1e-8
            && oracle_gap < 1e-8
            && (r2.beta - hand).abs() <= 1e-12
            && (r2.beta_descent - hand).abs() <= 1e-12,
        format!(
            "β = {:.10} (nalgebra oracle {oracle_beta:.10}), method agreement {:.2e}, |β − 2λ₁| = {:.2e}, 2-cell β = {} / {}",
            r.beta,
            r.method_agreement,
            (r.beta - 2.0 * r.lambda1).abs(),
            r2.beta,
            r2.beta_descent
        ),
    );
}

/// Rate `r` of `Σ vol (u − φ)² ≈ C e^{−rt}` over `[1e−8, 1e−1]·H₀`.
fn oracle_decay(traj: &Trajectory64, phi: &[f64], vol: f64) -> f64 {
    let h: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|u| u.iter().zip(phi).map(|(a, b)| vol * (a - b) * (a - b)).sum())
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&h)
        .filter(|(_, &v)| v >= 1e-8 * h[0] && v <= 1e-1 * h[0])
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    assert!(xs.len() >= 3, "no decay window");
    -line_fit(&xs, &ys).0
}

#[test]
fn criterion_06_exponential_decay() {
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["stationary-antisymmetric", "decay-disk", "decay-rectangle", "decay-mode"] {
        let (cfg, exp) = preset(name);
        let vol = exp.geom.cell_volume();
        let spectrum = oracle_spectrum(&dense_kernel(&exp.geom, &kernel_of(&cfg)), vol);
        let (lambda1, beta) = (spectrum[1], 2.0 * spectrum[1]);
        let traj = run_exp(&exp);
        let target = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, exp.op.mass(&exp.u0), exp.geom.grid.cell_size)
            .unwrap();
        let rate = oracle_decay(&traj, &target.phi, vol);
        if name == "decay-mode" {
            let rel = (rate / (2.0 * lambda1) - 1.0).abs();
            pass &= rel <= 0.02;
            lines.push(format!("{name}: rate {rate:.6} vs 2λ₁ {:.6} (rel {rel:.1e})", 2.0 * lambda1));
        } else {
            pass &= rate >= 0.95 * beta;
            lines.push(format!("{name}: rate {rate:.6} ≥ 0.95 β = {:.6}", 0.95 * beta));
        }
    }
    report("6", pass, lines.join("; "));
}

/// `F(u) = ¼ Σ_x Σ_y vol² J (u_y − u_x)² − Σ vol (Gh) u` by dense sums.
fn oracle_lyapunov(jm: &[Vec<f64>], gh: &[f64], vol: f64, u: &[f64]) -> f64 {
    let n = u.len();
    let mut q = 0.0;
    for x in 0..n {
        for y in 0..n {
            q += vol * vol * jm[x][y] * (u[y] - u[x]) * (u[y] - u[x]);
        }
    }
    0.25 * q - (0..n).map(|x| vol * gh[x] * u[x]).sum::<f64>()
}

/// Largest increase of `F` and worst `|ΔF/Δt + coefficient·Σ vol u_t²| / |F(0)|`.
fn lyapunov_runs(coefficient: f64) -> (f64, f64, f64) {
    let mut increase: f64 = f64::NEG_INFINITY;
    let mut worst_rel: f64 = 0.0;
    let mut stationary_drift: f64 = 0.0;
    for name in ["mass-identity", "stationary-antisymmetric", "mass-closed"] {
        let (cfg, exp) = preset(name);
        let vol = exp.geom.cell_volume();
        let kernel = kernel_of(&cfg);
        let jm = dense_kernel(&exp.geom, &kernel);
        let gh = exterior_sum(&exp.geom, &kernel, &exp.h);
        let solver = SolverConfig::new(Scheme::Rk4, 1e-3, 1.0);
        let traj = run(&exp.op, &exp.flux, &exp.datum, &exp.u0, &solver).unwrap();
        let f: Vec<f64> = traj.snapshots.iter().map(|u| oracle_lyapunov(&jm, &gh, vol, u)).collect();
        for k in 0..f.len() - 1 {
            increase = increase.max(f[k + 1] - f[k]);
            let dt = traj.times[k + 1] - traj.times[k];
            let diss: f64 = traj.snapshots[k + 1]
                .iter()
                .zip(&traj.snapshots[k])
                .map(|(a, b)| vol * ((a - b) / dt).powi(2))
                .sum();
            worst_rel = worst_rel.max(((f[k + 1] - f[k]) / dt + coefficient * diss).abs() / f[0].abs());
        }
        if name == "stationary-antisymmetric" {
            let sol = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, 0.0, exp.geom.grid.cell_size).unwrap();
            let at_phi = run(&exp.op, &exp.flux, &exp.datum, &sol.phi, &solver).unwrap();
            let fp: Vec<f64> = at_phi.snapshots.iter().map(|u| oracle_lyapunov(&jm, &gh, vol, u)).collect();
            stationary_drift = fp.iter().map(|v| (v - fp[0]).abs()).fold(0.0, f64::max);
        }
    }
    (increase, worst_rel, stationary_drift)
}

#[test]
fn criterion_07a_lyapunov_with_exact_dissipation() {
    // dF/dt = −⟨Lu + Gh, u_t⟩ = −Σ vol u_t²: the coefficient the functional
    // ¼Q(u) − ⟨Gh, u⟩ actually dissipates with
    let (increase, rel, drift) = lyapunov_runs(1.0);
    report(
        "7a",
        increase <= 1e-10 && rel < 1e-3 && drift <= 1e-10,
        format!(
            "3 static-flux runs: max ΔF = {increase:.2e} (≤ 1e-10); |ΔF/Δt + 1·Σvol·u_t²| / |F(0)| = {rel:.2e} (< 1e-3); F drift at φ = {drift:.2e}"
        ),
    );
}

#[test]
fn criterion_07b_lyapunov_as_stated() {
    // the stated identity dF/dt = −2 Σ vol u_t², checked as written
    let (increase, rel, drift) = lyapunov_runs(2.0);
    report(
        "7b",
        increase <= 1e-10 && rel < 1e-3 && drift <= 1e-10,
        format!(
            "3 static-flux runs: max ΔF = {increase:.2e}; |ΔF/Δt + 2·Σvol·u_t²| / |F(0)| = {rel:.2e} (< 1e-3 required); F drift at φ = {drift:.2e}"
        ),
    );
}

#[test]
fn criterion_08_blowup_threshold() {
    let mut lines = Vec::new();
    let mut pass = true;
    let (cfg, exp) = preset("blowup-alpha-0.5");
    let traj = run_exp(&exp);
    let big_t = cfg.boundary.blowup_time.unwrap();
    // u ≤ max u0 + ∫₀ᵗ max B (T − s)^{−α} ds for α < 1
    let b = exterior_sum(&exp.geom, &kernel_of(&cfg), &exp.h);
    let max_b = b.iter().cloned().fold(0.0, f64::max);
    let bound = exp.u0.iter().cloned().fold(0.0, f64::max) + max_b * big_t.powf(0.5) / 0.5;
    let sup = traj.final_snapshot().iter().cloned().fold(0.0, f64::max);
    let reached = (traj.final_time() - (big_t - 1e-4)).abs() < 1e-12;
    pass &= traj.event.is_none() && reached && sup <= bound;
    lines.push(format!("α = 0.5: reached T − 1e-4 = {reached}, sup {sup:.4} ≤ bound {bound:.4}, event {:?}", traj.event.map(|e| e.trigger)));
    for name in ["blowup-alpha-1", "blowup-alpha-1.5", "blowup-alpha-2.3"] {
        let (cfg, exp) = preset(name);
        let traj = run_exp(&exp);
        pass &= traj.event.is_some();
        lines.push(format!("α = {}: event {:?}", cfg.boundary.alpha.unwrap(), traj.event.map(|e| e.trigger)));
    }
    report("8", pass, lines.join("; "));
}

/// Continuum strips of the ladder: `B_i = {x : (i−1)d < 1 − x ≤ i d}`.
fn ladder_strip(exp: &Experiment, i: usize, d: f64) -> Vec<usize> {
    (0..exp.op.len())
        .filter(|&c| {
            let dist = 1.0 - exp.geom.interior_center(c)[0];
            dist > (i - 1) as f64 * d && dist <= i as f64 * d
        })
        .collect()
}

#[test]
fn criterion_09_strip_rates_and_profiles() {
    let mut lines = Vec::new();
    let mut pass = true;

    let start = Instant::now();
    let (cfg, exp) = preset("blowup-alpha-1.5");
    let d = cfg.kernel.radius;
    let big_t = cfg.boundary.blowup_time.unwrap();
    let traj = run_exp(&exp);
    let b1 = ladder_strip(&exp, 1, d);
    let (e, r2, pts) = oracle_rate(&traj, &b1, big_t, false);
    // w₁ = (α − 1)^{−1} Σ_y J vol h on B₁
    let w1: Vec<f64> = exterior_sum(&exp.geom, &kernel_of(&cfg), &exp.h).iter().map(|v| v / 0.5).collect();
    let tau = big_t - traj.final_time();
    let perr = b1
        .iter()
        .map(|&c| (tau.powf(0.5) * traj.final_snapshot()[c] - w1[c]).abs())
        .fold(0.0, f64::max);
    let h_grid = exp.geom.grid.cell_size;
    pass &= (e - 0.5).abs() <= 0.05 && r2 > 0.99 && perr < 10.0 * h_grid && pts >= 10;
    lines.push(format!(
        "α = 1.5: B₁ exponent {e:.4} (r² {r2:.5}, {pts} pts), profile error {perr:.2e} < {:.2} [{:.2} s]",
        10.0 * h_grid,
        start.elapsed().as_secs_f64()
    ));

    let start = Instant::now();
    let (_, exp) = preset("blowup-alpha-2.3");
    let traj = run_exp(&exp);
    let b2 = ladder_strip(&exp, 2, d);
    let (e2, r2b, _) = oracle_rate(&traj, &b2, big_t, false);
    let omega2: Vec<usize> = (0..exp.op.len()).filter(|&c| 1.0 - exp.geom.interior_center(c)[0] > 2.0 * d).collect();
    let tau_f = big_t - traj.final_time();
    let k10 = traj.nearest_index(big_t - 10.0 * tau_f);
    let growth = (region_max(traj.final_snapshot(), &omega2) / region_max(&traj.snapshots[k10], &omega2)).log10();
    pass &= (e2 - 0.3).abs() <= 0.05 && growth < 0.02;
    lines.push(format!(
        "α = 2.3: B₂ exponent {e2:.4} (r² {r2b:.4}), Ω₂ last-decade log₁₀ growth {growth:.2e} (bounded) [{:.2} s]",
        start.elapsed().as_secs_f64()
    ));

    let start = Instant::now();
    let (cfg, exp) = preset("blowup-alpha-1");
    let traj = run_exp(&exp);
    let (slope, _, _) = oracle_rate(&traj, &b1, big_t, true);
    let wt1 = exterior_sum(&exp.geom, &kernel_of(&cfg), &exp.h);
    let max_wt1 = region_max(&wt1, &b1);
    let rel = (slope / max_wt1 - 1.0).abs();
    pass &= rel <= 0.1;
    lines.push(format!(
        "α = 1: log slope {slope:.4} vs max w̃₁ {max_wt1:.4} (rel {rel:.3}) [{:.2} s]",
        start.elapsed().as_secs_f64()
    ));
    report("9", pass, lines.join("; "));
}

#[test]
fn criterion_10_blowup_set() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, blowing) in [("blowup-alpha-1.5", 1usize), ("blowup-alpha-2.3", 2)] {
        let (cfg, exp) = preset(name);
        let d = cfg.kernel.radius;
        let big_t = cfg.boundary.blowup_time.unwrap();
        let traj = run_exp(&exp);
        let set = blowup_set_estimate(
            &traj,
            big_t,
            exp.strips.as_ref().unwrap(),
            cfg.boundary.alpha.unwrap(),
            &DivergenceCriterion::default(),
        )
        .unwrap();
        let mut expected: Vec<usize> = (1..=blowing).flat_map(|i| ladder_strip(&exp, i, d)).collect();
        expected.sort_unstable();
        let symdiff = set.estimated.iter().filter(|c| !expected.contains(c)).count()
            + expected.iter().filter(|c| !set.estimated.contains(c)).count();
        pass &= symdiff <= 2 * blowing;
        lines.push(format!("{name}: |estimated| = {}, |∪B_i| = {}, symmetric difference {symdiff} (≤ {})", set.estimated.len(), expected.len(), 2 * blowing));
    }
    let (cfg, exp) = preset("blowup-alpha-4.5");
    let traj = run_exp(&exp);
    let set = blowup_set_estimate(
        &traj,
        cfg.boundary.blowup_time.unwrap(),
        exp.strips.as_ref().unwrap(),
        4.5,
        &DivergenceCriterion::default(),
    )
    .unwrap();
    let global = set.estimated.len() == exp.op.len();
    pass &= global;
    lines.push(format!("α = 4.5: {} of {} cells flagged (global = {global})", set.estimated.len(), exp.op.len()));
    report("10", pass, lines.join("; "));
}

#[test]
fn criterion_11_nonlinear_rates() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, p, want) in [("blowup-p2-disk", 2.0, 1.0), ("blowup-p3-interval", 3.0, 0.5)] {
        let (_, exp) = preset(name);
        let traj = run_exp(&exp);
        let rep = nonlinear_rate_check(&traj, p).unwrap();
        let big_t = rep.blowup_time;
        let all: Vec<usize> = (0..exp.op.len()).collect();
        let (e, r2, pts) = oracle_rate(&traj, &all, big_t, false);
        // explicit lower bound (p−1)^{−1/(p−1)} (T−t)^{−1/(p−1)} inside the window
        let mut shortfall = f64::NEG_INFINITY;
        for (k, &t) in traj.times.iter().enumerate() {
            let tau = big_t - t;
            if (1e-4..=1e-1).contains(&tau) {
                let lower = ((p - 1.0) * tau).powf(-1.0 / (p - 1.0));
                shortfall = shortfall.max((lower - region_max(&traj.snapshots[k], &all)) / lower);
            }
        }
        pass &= (e - want).abs() <= 0.1 && (rep.fit.exponent - want).abs() <= 0.1 && shortfall <= 0.05;
        lines.push(format!(
            "p = {p}: T ≈ {big_t:.5}, exponent {e:.4} (library {:.4}, r² {r2:.5}, {pts} pts), worst lower-bound shortfall {shortfall:.3}",
            rep.fit.exponent
        ));
    }
    for (name, p) in [("bounded-p0.5", 0.5f64), ("bounded-p1", 1.0)] {
        let (cfg, exp) = preset(name);
        let traj = run_exp(&exp);
        let b = exterior_sum(&exp.geom, &kernel_of(&cfg), &vec![1.0; exp.geom.n_collar()]);
        let max_b = b.iter().cloned().fold(0.0, f64::max);
        let max_u0 = exp.u0.iter().cloned().fold(0.0, f64::max);
        let envelope = |t: f64| {
            if p < 1.0 {
                let q = 1.0 - p;
                max_u0.max((q * max_b).powf(1.0 / q)) * (t + 1.0).powf(1.0 / q)
            } else {
                max_u0 * (max_b.max(1.0) * t).exp()
            }
        };
        let ratio = traj
            .times
            .iter()
            .zip(&traj.snapshots)
            .map(|(&t, u)| u.iter().cloned().fold(0.0, f64::max) / envelope(t))
            .fold(0.0, f64::max);
        pass &= traj.event.is_none() && ratio <= 1.0 + 1e-12;
        lines.push(format!("p = {p}: no event, max sup/envelope {ratio:.4} over t ≤ {}", traj.final_time()));
    }
    report("11", pass, lines.join("; "));
}

#[test]
fn criterion_12_nonlinear_blowup_set() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, p, k) in [("blowup-p2-disk", 2.0, 2usize), ("blowup-p2-interval", 2.0, 2), ("blowup-p3-interval", 3.0, 1)] {
        let (cfg, exp) = preset(name);
        let traj = run_exp(&exp);
        let set = nonlinear_blowup_set(&traj, p, &exp.geom, &DivergenceCriterion::default()).unwrap();
        let disk = cfg.domain.shape == nlflux_cli::config::ShapeKind::Disk;
        let dist = |c: usize| {
            let x = exp.geom.interior_center(c);
            if disk { 1.0 - (x[0] * x[0] + x[1] * x[1]).sqrt() } else { x[0].min(1.0 - x[0]) }
        };
        let deepest = set.flagged.iter().map(|&c| dist(c)).fold(0.0, f64::max);
        let width = k as f64 * cfg.kernel.radius;
        pass &= set.k == k && !set.flagged.is_empty() && deepest < width;
        lines.push(format!("{name}: K = {}, {} cells flagged, deepest at distance {deepest:.4} < K·d = {width}", set.k, set.flagged.len()));
    }
    report("12", pass, lines.join("; "));
}

#[test]
fn criterion_13_nonuniqueness_probe() {
    let (cfg, exp) = preset("nonuniqueness-p0.5");
    let probe = cfg.nonuniqueness.clone().unwrap();
    let p = cfg.boundary.p.unwrap();
    let chart = build_boundary_chart(&exp.geom).unwrap();
    let r = nonuniqueness_probe(&exp.op, &exp.flux, &chart, p, &probe.eps, probe.t_star, probe.dt).unwrap();

    let h_grid = exp.geom.grid.cell_size;
    let boundary: Vec<usize> = (0..exp.op.len())
        .filter(|&c| {
            let x = exp.geom.interior_center(c)[0];
            x.min(1.0 - x) < h_grid
        })
        .collect();
    let kernel = kernel_of(&cfg);
    let b = exterior_sum(&exp.geom, &kernel, &vec![1.0; exp.geom.n_collar()]);
    let a = absorption(&dense_kernel(&exp.geom, &kernel), exp.geom.cell_volume());
    let q = 1.0 - p;
    let min_b = boundary.iter().map(|&c| b[c]).fold(f64::INFINITY, f64::min);
    let max_a = a.iter().cloned().fold(0.0, f64::max);
    let gamma = (min_b / (1.0 + max_a * q * probe.t_star)).powf(1.0 / q);
    let subsolution = gamma * (q * probe.t_star).powf(1.0 / q);

    let mut violation: f64 = 0.0;
    for k in 0..r.fields.len() - 1 {
        for (lo, hi) in r.fields[k].iter().zip(&r.fields[k + 1]) {
            violation = violation.max(lo - hi);
        }
    }
    let lowest = boundary
        .iter()
        .flat_map(|&c| r.fields.iter().map(move |f| f[c]))
        .fold(f64::INFINITY, f64::min);
    let limit_min = r.limit.iter().cloned().fold(f64::INFINITY, f64::min);
    report(
        "13",
        r.boundary_cells == boundary
            && violation <= 1e-10
            && lowest > subsolution
            && limit_min > subsolution
            && (r.subsolution_value - subsolution).abs() <= 1e-14
            && r.zero_solution_sup == 0.0,
        format!(
            "ε ∈ {:?}: monotonicity violation {violation:.1e} (≤ 1e-10); boundary values ≥ {lowest:.5}, ε→0 limit {limit_min:.5} > subsolution γ((1−p)t*)^{{1/(1−p)}} = {subsolution:.5}; zero data stays at zero",
            r.eps
        ),
    );
}

#[test]
fn criterion_14_refinement() {
    // compatible continuum datum on the ladder collars: h = 1 on (1, 1.25],
    // h = −1.5 (1 − 4s) at depth s on [−0.25, 0); its continuum net flux is 0
    let kernel = Kernel::new(KernelFamily::Uniform, 0.25, 1).unwrap();
    let mut compat = Vec::new();
    let mut a_err = Vec::new();
    for h_grid in [0.05, 0.025, 0.0125] {
        let g = build_grid(ShapeSpec::Interval { a: 0.0, b: 1.0 }, 0.25, h_grid).unwrap();
        let (op, flux) = assemble(&g, &kernel).unwrap();
        let h = g.collar_field(|y| if y[0] > 1.0 { 1.0 } else { -1.5 * (1.0 + 4.0 * y[0]) });
        let lib = flux.compat_residual(&op.vol, &h).unwrap();
        let oracle = mass(&exterior_sum(&g, &kernel, &h), g.cell_volume());
        assert!((lib - oracle).abs() < 1e-12, "{lib} vs {oracle}");
        compat.push(lib.abs());
        // A(x) against the continuum ∫₀¹ J(x − y) dy = 2 (min(x+d, 1) − max(x−d, 0))
        let jm = dense_kernel(&g, &kernel);
        let a = absorption(&jm, g.cell_volume());
        let err = (0..op.len())
            .map(|c| {
                let x = g.interior_center(c)[0];
                (a[c] - 2.0 * ((x + 0.25).min(1.0) - (x - 0.25).max(0.0))).abs()
            })
            .fold(0.0, f64::max);
        a_err.push(err);
    }
    let ratios = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| w[1] / w[0]).collect() };
    let (rc, ra) = (ratios(&compat), ratios(&a_err));
    let ok = |r: &[f64]| r.iter().all(|&x| (0.35..=0.65).contains(&x));
    report(
        "14",
        ok(&rc) && ok(&ra),
        format!(
            "compat residual {}, halving ratios {rc:.3?}; A(x) max error {}, ratios {ra:.3?} (each in 0.5 ± 30%)",
            sci(&compat),
            sci(&a_err)
        ),
    );
}
