//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns a flat summary of scalar metrics, which is also
//! written as `summary.json` and is what preset expectations are checked
//! against.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use nlflux::analysis::{
    blowup_set_estimate, lyapunov_max_increase, lyapunov_series, nonlinear_blowup_set, nonlinear_rate_check,
    nonuniqueness_probe, poincare_constant, profile_error, rate_fit, supersolution_ratio, DivergenceCriterion,
    FitMode,
};
use nlflux::evolution::{mass_balance_check, run, BoundaryDatum};
use nlflux::geometry::build_boundary_chart;
use nlflux::io::{write_field, write_json, write_series};
use nlflux::scalar::max_value;
use nlflux::stationary::{convergence_verify, solve_stationary};
use nlflux::Trajectory64;

use crate::config::{BoundaryKind, ExperimentConfig};
use crate::error::CliError;
use crate::setup::{build, Experiment};

pub type Summary = BTreeMap<String, Value>;

/// Runtime options shared by all subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub parallel: bool,
}

fn finish(out: &Path, summary: Summary) -> Result<Summary, CliError> {
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn put(summary: &mut Summary, key: &str, value: impl Into<Value>) {
    summary.insert(key.to_string(), value.into());
}

/// Integrates the experiment; numerical failures are recorded in
/// `failure.json` before being returned.
fn integrate(exp: &Experiment, out: &Path) -> Result<Trajectory64, CliError> {
    run(&exp.op, &exp.flux, &exp.datum, &exp.u0, &exp.solver).map_err(|e| {
        let _ = write_json(&out.join("failure.json"), &json!({ "error": e.to_string() }));
        CliError::Core(e)
    })
}

fn write_trajectory(exp: &Experiment, traj: &Trajectory64, out: &Path) -> Result<Option<Vec<f64>>, CliError> {
    let lyapunov = match exp.datum {
        BoundaryDatum::Static { .. } => Some(lyapunov_series(traj, &exp.op, &exp.flux, &exp.h)?),
        _ => None,
    };
    write_series(&out.join("series.txt"), traj, lyapunov.as_deref())?;
    write_field(&out.join("field_initial.txt"), &exp.geom, "u0", &traj.snapshots[0])?;
    write_field(&out.join("field_final.txt"), &exp.geom, "u_final", traj.final_snapshot())?;
    if let Some(event) = &traj.event {
        write_json(&out.join("event.json"), event)?;
    }
    Ok(lyapunov)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    let exp = build(cfg, opts.parallel)?;
    fs::create_dir_all(out)?;
    let traj = integrate(&exp, out)?;
    let lyapunov = write_trajectory(&exp, &traj, out)?;
    let residual = mass_balance_check(&traj);
    write_json(
        &out.join("mass_balance.json"),
        &json!({
            "relative_residual": residual,
            "initial_mass": traj.mass[0],
            "final_mass": traj.mass.last(),
            "flux_integral": traj.flux_integral.last(),
        }),
    )?;
    let mut s = Summary::new();
    put(&mut s, "mass_residual", residual);
    put(&mut s, "final_time", traj.final_time());
    put(&mut s, "final_sup", max_value(traj.final_snapshot()));
    put(&mut s, "snapshots", traj.len());
    put(&mut s, "blowup", traj.event.is_some());
    let drift = traj
        .snapshots
        .iter()
        .flat_map(|u| u.iter().zip(&traj.snapshots[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    put(&mut s, "snapshot_drift", drift);
    if let Some(l) = &lyapunov {
        put(&mut s, "lyapunov_max_increase", lyapunov_max_increase(l));
    }
    if let BoundaryDatum::NonlinearTrace { p, .. } = exp.datum {
        if p <= 1.0 {
            put(&mut s, "envelope_ratio", supersolution_ratio(&traj, p, &exp.flux)?);
        }
    }
    finish(out, s)
}

pub fn stationary(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    if !matches!(cfg.boundary.kind, BoundaryKind::Static | BoundaryKind::None) {
        return Err(CliError::Config { line: 0, message: "stationary needs a static or empty boundary".into() });
    }
    let exp = build(cfg, opts.parallel)?;
    let mass = cfg.stationary.mass.unwrap_or_else(|| exp.op.mass(&exp.u0));
    // an incompatible flux surfaces through the error, which carries the residual
    let sol = solve_stationary(&exp.op.fredholm(), &exp.flux, &exp.h, mass, exp.geom.grid.cell_size)?;
    fs::create_dir_all(out)?;
    write_field(&out.join("phi.txt"), &exp.geom, "phi", &sol.phi)?;
    write_json(&out.join("stationary.json"), &sol)?;
    let spectral = poincare_constant(&exp.op, cfg.seed)?;
    write_json(&out.join("spectral.json"), &spectral)?;

    let mut s = Summary::new();
    put(&mut s, "residual", sol.residual);
    put(&mut s, "compat_residual", sol.compat);
    put(&mut s, "phi_mass", exp.op.mass(&sol.phi));
    let lo = sol.phi.iter().copied().fold(f64::INFINITY, f64::min);
    put(&mut s, "phi_spread", max_value(&sol.phi) - lo);
    put(&mut s, "beta", spectral.beta);
    put(&mut s, "lambda1", spectral.lambda1);
    if cfg.stationary.decay {
        let traj = integrate(&exp, out)?;
        write_trajectory(&exp, &traj, out)?;
        let target = solve_stationary(
            &exp.op.fredholm(),
            &exp.flux,
            &exp.h,
            exp.op.mass(&exp.u0),
            exp.geom.grid.cell_size,
        )?;
        match convergence_verify(&traj, &target, &exp.op.vol, spectral.beta)? {
            Some(fit) => {
                write_json(&out.join("decay.json"), &fit)?;
                put(&mut s, "decay_rate", fit.rate);
                put(&mut s, "decay_over_beta", fit.rate / spectral.beta);
                put(&mut s, "decay_over_two_lambda1", fit.rate / (2.0 * spectral.lambda1));
                put(&mut s, "decay_r2", fit.r2);
            }
            None => put(&mut s, "decay_rate", Value::Null),
        }
    }
    finish(out, s)
}

pub fn spectral(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    let exp = build(cfg, opts.parallel)?;
    let r = poincare_constant(&exp.op, cfg.seed)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("spectral.json"), &r)?;
    if !r.connected {
        eprintln!("warning: beta vanishes; the mask is not kernel-connected");
    }
    let mut s = Summary::new();
    put(&mut s, "beta", r.beta);
    put(&mut s, "lambda1", r.lambda1);
    put(&mut s, "beta_descent", r.beta_descent);
    put(&mut s, "method_agreement", r.method_agreement);
    put(&mut s, "identity_gap", (r.beta - 2.0 * r.lambda1).abs());
    put(&mut s, "connected", r.connected);
    finish(out, s)
}

pub fn blowup(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    match cfg.boundary.kind {
        BoundaryKind::PowerLaw => blowup_power_law(cfg, out, opts),
        BoundaryKind::Nonlinear => blowup_nonlinear(cfg, out, opts),
        _ => Err(CliError::Config { line: 0, message: "blowup needs a power_law or nonlinear boundary".into() }),
    }
}

fn blowup_power_law(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    let exp = build(cfg, opts.parallel)?;
    let strips = exp.strips.as_ref().expect("power-law strips");
    let profiles = exp.profiles.as_ref().expect("power-law profiles");
    let alpha = cfg.boundary.alpha.expect("validated");
    let big_t = cfg.boundary.blowup_time.expect("validated");
    fs::create_dir_all(out)?;
    write_json(&out.join("strips.json"), strips)?;
    for (k, w) in profiles.w.iter().enumerate() {
        write_field(&out.join(format!("profile_w{}.txt", k + 1)), &exp.geom, &format!("w_{}", k + 1), w)?;
    }
    for (k, w) in profiles.w_tilde.iter().enumerate() {
        write_field(&out.join(format!("profile_wt{}.txt", k + 1)), &exp.geom, &format!("w~_{}", k + 1), w)?;
    }
    let traj = integrate(&exp, out)?;
    write_trajectory(&exp, &traj, out)?;

    let mut s = Summary::new();
    put(&mut s, "blowup", traj.event.is_some());
    put(&mut s, "final_sup", max_value(traj.final_snapshot()));
    put(&mut s, "strips", strips.len());
    let mut rates = Vec::new();
    for i in 1..=strips.len() {
        let region = strips.strip(i);
        let power = rate_fit(&traj, region, big_t, FitMode::Power).ok();
        let log = rate_fit(&traj, region, big_t, FitMode::Log).ok();
        let perr = profiles.w(i).ok().map(|w| profile_error(&traj, region, big_t, alpha - i as f64, w));
        if let Some(f) = &power {
            put(&mut s, &format!("b{i}_exponent"), f.exponent);
            put(&mut s, &format!("b{i}_r2"), f.r2);
        }
        if let Some(f) = &log {
            put(&mut s, &format!("b{i}_log_slope"), f.exponent);
        }
        if let Some(e) = perr {
            put(&mut s, &format!("b{i}_profile_error"), e);
        }
        if let Ok(wt) = profiles.w_tilde(i) {
            let top = region.iter().map(|&c| wt[c]).fold(0.0, f64::max);
            put(&mut s, &format!("b{i}_max_w_tilde"), top);
        }
        rates.push(json!({ "strip": i, "power": power, "log": log, "profile_error": perr }));
    }
    write_json(&out.join("rates.json"), &rates)?;

    if traj.event.is_some() {
        let set = blowup_set_estimate(&traj, big_t, strips, alpha, &DivergenceCriterion::default())?;
        write_json(&out.join("blowup_set.json"), &set)?;
        put(&mut s, "set_symmetric_difference", set.symmetric_difference);
        put(&mut s, "set_size", set.estimated.len());
        put(&mut s, "set_expected", set.expected.len());
        put(&mut s, "global_blowup", set.estimated.len() == exp.op.len());
    } else {
        write_json(
            &out.join("no_blowup.json"),
            &json!({ "final_time": traj.final_time(), "final_sup": max_value(traj.final_snapshot()) }),
        )?;
    }
    let summary = finish(out, s)?;
    if alpha >= 1.0 && traj.event.is_none() {
        return Err(CliError::MissingBlowup {
            final_time: traj.final_time(),
            reason: format!("alpha = {alpha} >= 1"),
        });
    }
    Ok(summary)
}

fn blowup_nonlinear(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    let exp = build(cfg, opts.parallel)?;
    let p = cfg.boundary.p.expect("validated");
    fs::create_dir_all(out)?;
    let traj = integrate(&exp, out)?;
    write_trajectory(&exp, &traj, out)?;
    let mut s = Summary::new();
    put(&mut s, "blowup", traj.event.is_some());
    put(&mut s, "final_sup", max_value(traj.final_snapshot()));
    if p > 1.0 {
        let Some(event) = traj.event else {
            finish(out, s)?;
            return Err(CliError::MissingBlowup {
                final_time: traj.final_time(),
                reason: format!("trace exponent p = {p} > 1"),
            });
        };
        let rate = nonlinear_rate_check(&traj, p)?;
        let set = nonlinear_blowup_set(&traj, p, &exp.geom, &DivergenceCriterion::default())?;
        write_json(&out.join("nonlinear.json"), &json!({ "event": event, "rate": rate, "set": set }))?;
        put(&mut s, "blowup_time", rate.blowup_time);
        put(&mut s, "exponent", rate.fit.exponent);
        put(&mut s, "exponent_r2", rate.fit.r2);
        put(&mut s, "lower_bound_violation", rate.lower_bound_violation);
        put(&mut s, "lower_bound_ok", rate.lower_bound_ok);
        put(&mut s, "contained", set.contained);
        put(&mut s, "deepest", set.deepest);
        put(&mut s, "collar_width", set.collar_width);
        put(&mut s, "flagged", set.flagged.len());
    } else {
        put(&mut s, "envelope_ratio", supersolution_ratio(&traj, p, &exp.flux)?);
    }
    finish(out, s)
}

pub fn nonuniqueness(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<Summary, CliError> {
    let probe = cfg.nonuniqueness.as_ref().ok_or_else(|| CliError::Config {
        line: 0,
        message: "nonuniqueness needs a [nonuniqueness] table".into(),
    })?;
    let p = match (cfg.boundary.kind, cfg.boundary.p) {
        (BoundaryKind::Nonlinear, Some(p)) => p,
        _ => return Err(CliError::Config { line: 0, message: "nonuniqueness needs a nonlinear boundary".into() }),
    };
    let exp = build(cfg, opts.parallel)?;
    let chart = build_boundary_chart(&exp.geom)?;
    let r = nonuniqueness_probe(&exp.op, &exp.flux, &chart, p, &probe.eps, probe.t_star, probe.dt)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("nonuniqueness.json"), &r)?;
    for (e, f) in r.eps.iter().zip(&r.fields) {
        write_field(&out.join(format!("field_eps_{e:e}.txt")), &exp.geom, &format!("eps={e:e}"), f)?;
    }
    let mut s = Summary::new();
    put(&mut s, "monotonicity_violation", r.monotonicity_violation);
    put(&mut s, "margin", r.margin);
    put(&mut s, "subsolution_value", r.subsolution_value);
    put(&mut s, "above_subsolution", r.above_subsolution);
    put(&mut s, "zero_solution_sup", r.zero_solution_sup);
    finish(out, s)
}
