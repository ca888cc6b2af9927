//! Library side of the `nlflux` experiment runner: config parsing, preset
//! registry, experiment assembly and the subcommands themselves. The binary
//! is a thin argument parser over [`commands`] and [`verify`].

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;
pub mod setup;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
