//! Presets shipped with the binary. Each is an ordinary config file under
//! `presets/`; `nlflux <cmd> --preset NAME` is equivalent to passing that
//! file with `--config`.

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("blowup-alpha-0.5", include_str!("../presets/blowup-alpha-0.5.toml")),
    ("blowup-alpha-1", include_str!("../presets/blowup-alpha-1.toml")),
    ("blowup-alpha-1.5", include_str!("../presets/blowup-alpha-1.5.toml")),
    ("blowup-alpha-2.3", include_str!("../presets/blowup-alpha-2.3.toml")),
    ("blowup-alpha-4.5", include_str!("../presets/blowup-alpha-4.5.toml")),
    ("blowup-p2-disk", include_str!("../presets/blowup-p2-disk.toml")),
    ("blowup-p2-interval", include_str!("../presets/blowup-p2-interval.toml")),
    ("blowup-p3-interval", include_str!("../presets/blowup-p3-interval.toml")),
    ("bounded-p0.5", include_str!("../presets/bounded-p0.5.toml")),
    ("bounded-p1", include_str!("../presets/bounded-p1.toml")),
    ("constant-rest", include_str!("../presets/constant-rest.toml")),
    ("decay-disk", include_str!("../presets/decay-disk.toml")),
    ("decay-mode", include_str!("../presets/decay-mode.toml")),
    ("decay-rectangle", include_str!("../presets/decay-rectangle.toml")),
    ("mass-closed", include_str!("../presets/mass-closed.toml")),
    ("mass-disk", include_str!("../presets/mass-disk.toml")),
    ("mass-identity", include_str!("../presets/mass-identity.toml")),
    ("mass-ladder-power", include_str!("../presets/mass-ladder-power.toml")),
    ("mass-nonlinear", include_str!("../presets/mass-nonlinear.toml")),
    ("mass-rectangle", include_str!("../presets/mass-rectangle.toml")),
    ("nonuniqueness-p0.5", include_str!("../presets/nonuniqueness-p0.5.toml")),
    ("spectral-interval", include_str!("../presets/spectral-interval.toml")),
    ("stationary-antisymmetric", include_str!("../presets/stationary-antisymmetric.toml")),
    ("stationary-one-sided", include_str!("../presets/stationary-one-sided.toml")),
    ("stationary-zero", include_str!("../presets/stationary-zero.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::UnknownPreset(name.to_string()))
}

pub fn load(name: &str) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::parse(text(name)?)
}
