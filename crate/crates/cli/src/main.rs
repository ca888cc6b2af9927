use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlflux_cli::commands::RunOptions;
use nlflux_cli::config::CommandKind;
use nlflux_cli::verify::{dispatch, verify_all};
use nlflux_cli::{presets, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "nlflux", version, about = "Nonlocal diffusion with prescribed and nonlinear boundary flux")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate in time; writes the series, snapshots and mass balance.
    Simulate(Common),
    /// Solve for the stationary state of a static flux.
    Stationary(Common),
    /// Compute the J-Poincaré constant by two methods.
    Spectral(Common),
    /// Power-law or nonlinear blow-up experiment.
    Blowup(Common),
    /// Regularized epsilon-ladder probe for the sublinear trace flux.
    Nonuniqueness(Common),
    /// Run every shipped preset and check its expectations.
    Verify(VerifyArgs),
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Config file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset name (see `nlflux presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "nlflux-out")]
    out: PathBuf,
    /// Worker threads; more than one enables cell-parallel operators.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "nlflux-verify")]
    out: PathBuf,
    /// Worker threads; more than one runs presets concurrently.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config { line: 0, message: "--threads must be at least 1".into() });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config { line: 0, message: format!("cannot start thread pool: {e}") })
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => presets::load(name)?,
        (None, None) => unreachable!("clap requires one of --config/--preset"),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (kind, common) = match cli.command {
        Command::Simulate(c) => (CommandKind::Simulate, c),
        Command::Stationary(c) => (CommandKind::Stationary, c),
        Command::Spectral(c) => (CommandKind::Spectral, c),
        Command::Blowup(c) => (CommandKind::Blowup, c),
        Command::Nonuniqueness(c) => (CommandKind::Nonuniqueness, c),
        Command::Verify(v) => {
            init_threads(v.threads)?;
            verify_all(&v.out, RunOptions::default(), v.seed, v.threads > 1)?;
            return Ok(());
        }
        Command::Presets => {
            for name in presets::names() {
                println!("{name}");
            }
            return Ok(());
        }
    };
    init_threads(common.threads)?;
    let cfg = load(&common)?;
    let opts = RunOptions { parallel: common.threads > 1 };
    let summary = dispatch(kind, &cfg, &common.out, opts)?;
    for (k, v) in &summary {
        println!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
