//! The `verify` subcommand: runs every shipped preset and checks its
//! `[expect]` table against the command summary.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::commands::{self, RunOptions, Summary};
use crate::config::{CommandKind, ExperimentConfig, Expectation};
use crate::error::CliError;
use crate::presets;

pub fn dispatch(
    command: CommandKind,
    cfg: &ExperimentConfig,
    out: &Path,
    opts: RunOptions,
) -> Result<Summary, CliError> {
    match command {
        CommandKind::Simulate => commands::simulate(cfg, out, opts),
        CommandKind::Stationary => commands::stationary(cfg, out, opts),
        CommandKind::Spectral => commands::spectral(cfg, out, opts),
        CommandKind::Blowup => commands::blowup(cfg, out, opts),
        CommandKind::Nonuniqueness => commands::nonuniqueness(cfg, out, opts),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub preset: String,
    pub passed: bool,
    pub exit_code: i32,
    pub failures: Vec<String>,
    pub seconds: f64,
}

/// Compares one metric against its expectation; `None` when satisfied.
pub fn check_metric(name: &str, value: Option<&Value>, e: &Expectation) -> Option<String> {
    let Some(value) = value else {
        return Some(format!("{name}: metric missing"));
    };
    if let Some(want) = &e.equals {
        let ok = match (want, value) {
            (toml::Value::Boolean(a), Value::Bool(b)) => a == b,
            (toml::Value::Integer(a), v) => v.as_f64() == Some(*a as f64),
            (toml::Value::Float(a), v) => v.as_f64() == Some(*a),
            (toml::Value::String(a), Value::String(b)) => a == b,
            _ => false,
        };
        if !ok {
            return Some(format!("{name} = {value}, expected {want}"));
        }
    }
    let needs_number = e.max.is_some() || e.min.is_some() || e.target.is_some();
    if !needs_number {
        return None;
    }
    let Some(x) = value.as_f64() else {
        return Some(format!("{name} = {value} is not a number"));
    };
    if let Some(m) = e.max {
        if !(x <= m) {
            return Some(format!("{name} = {x:e} exceeds max {m:e}"));
        }
    }
    if let Some(m) = e.min {
        if !(x >= m) {
            return Some(format!("{name} = {x:e} below min {m:e}"));
        }
    }
    if let Some(t) = e.target {
        let tol = e.tol.unwrap_or(0.0).max(e.rel.unwrap_or(0.0) * t.abs());
        if !((x - t).abs() <= tol) {
            return Some(format!("{name} = {x:e} outside {t} ± {tol:e}"));
        }
    }
    None
}

pub fn check_preset(name: &str, out: &Path, opts: RunOptions, seed: Option<u64>) -> CheckOutcome {
    let start = Instant::now();
    let (code, failures) = match presets::load(name) {
        Err(e) => (e.exit_code(), vec![e.to_string()]),
        Ok(mut cfg) => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let command = cfg.command.expect("presets name their command");
            let res = dispatch(command, &cfg, &out.join(name), opts);
            let (code, summary) = match res {
                Ok(s) => (0, s),
                Err(e) => (e.exit_code(), Summary::new()),
            };
            let mut with_exit = summary;
            with_exit.insert("exit".into(), Value::from(code));
            let expects_exit = cfg.expect.contains_key("exit");
            let mut failures: Vec<String> = cfg
                .expect
                .iter()
                .filter(|(k, _)| code == 0 || k.as_str() == "exit")
                .filter_map(|(k, e)| check_metric(k, with_exit.get(k), e))
                .collect();
            if code != 0 && !expects_exit {
                failures.push(format!("command exited with status {code}"));
            }
            (code, failures)
        }
    };
    CheckOutcome {
        preset: name.to_string(),
        passed: failures.is_empty(),
        exit_code: code,
        failures,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs all presets (in parallel when `concurrent`), prints one line per
/// preset and writes `verify.json`.
pub fn verify_all(out: &Path, opts: RunOptions, seed: Option<u64>, concurrent: bool) -> Result<Vec<CheckOutcome>, CliError> {
    std::fs::create_dir_all(out)?;
    let names: Vec<&str> = presets::names().collect();
    let outcomes: Vec<CheckOutcome> = if concurrent {
        names.par_iter().map(|n| check_preset(n, out, opts, seed)).collect()
    } else {
        names.iter().map(|n| check_preset(n, out, opts, seed)).collect()
    };
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<28} {:>8.2} s", o.preset, o.seconds);
        for f in &o.failures {
            println!("     {f}");
        }
    }
    nlflux::io::write_json(&out.join("verify.json"), &outcomes)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::Verification { failed, total: outcomes.len() });
    }
    Ok(outcomes)
}
