//! Experiment configuration.
//!
//! A config is one TOML file. Every table except `[domain]` and `[kernel]`
//! is optional:
//!
//! ```toml
//! command = "simulate"          # subcommand `verify` runs for this config
//! seed = 7                      # randomized initial data
//!
//! [domain]
//! shape = "interval"            # interval | rectangle | disk
//! bounds = [0.0, 1.0]           # [a, b] | [x0, y0, x1, y1] | [cx, cy, r]
//! h_grid = 0.05
//!
//! [kernel]
//! family = "uniform"            # uniform | tent | bump
//! radius = 0.25
//!
//! [solver]
//! scheme = "rk4"                # euler | rk4 | exponential | picard
//! dt = 1e-3
//! t_end = 1.0
//! adaptive = false              # shrink dt near the singular time
//! adaptive_fraction = 0.05
//! threshold = 1e8               # sup-norm blow-up trigger
//! stride = 1                    # keep every stride-th step as a snapshot
//!
//! [boundary]
//! kind = "static"               # none | static | power_law | nonlinear
//! h = "right"                   # zero | constant | right | left | antisymmetric | file
//! value = 1.0
//! alpha = 1.5                   # power_law
//! blowup_time = 0.11            # power_law
//! p = 2.0                       # nonlinear
//!
//! [initial]
//! kind = "constant"             # constant | cosine | random | matched | mode | file
//! value = 1.0
//!
//! [stationary]
//! mass = 0.0                    # defaults to the mass of the initial field
//! decay = true                  # also fit ‖u − φ‖² decay along a run
//!
//! [nonuniqueness]
//! eps = [1e-2, 1e-3, 1e-4]
//! t_star = 0.5
//! dt = 1e-3
//!
//! [expect]                      # checked by `verify`
//! mass_residual = { max = 1e-6 }
//! b1_exponent = { target = 0.5, tol = 0.05 }
//! ```
//!
//! `right`/`left` put `value` on the collar cells whose `x` lies right/left
//! of the domain's centroid; `antisymmetric` puts `+value` right and
//! `−value` left. Initial fields: `cosine` is
//! `value + amplitude·cos(wavenumber·π·(x − x_min)/width)`; `random` is
//! `value + amplitude·U(−1, 1)` from the seed; `matched` is the asymptotic
//! profile expansion of a power-law datum at `t = 0`; `mode` is
//! `φ + amplitude·v₁` with `v₁` the slowest eigenfield.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
    pub nonuniqueness: Option<NonuniquenessConfig>,
    #[serde(default)]
    pub expect: BTreeMap<String, Expectation>,
    /// Source text, kept for line-numbered validation messages.
    #[serde(skip)]
    source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Simulate,
    Stationary,
    Spectral,
    Blowup,
    Nonuniqueness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Interval,
    Rectangle,
    Disk,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeKind,
    pub bounds: Vec<f64>,
    pub h_grid: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub scheme: String,
    pub dt: f64,
    pub t_end: f64,
    pub adaptive: bool,
    pub adaptive_fraction: f64,
    pub threshold: f64,
    pub stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: "rk4".into(),
            dt: 1e-3,
            t_end: 1.0,
            adaptive: false,
            adaptive_fraction: 0.05,
            threshold: 1e8,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    None,
    Static,
    PowerLaw,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollarShape {
    #[default]
    Zero,
    Constant,
    Right,
    Left,
    Antisymmetric,
    File,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub kind: BoundaryKind,
    pub h: CollarShape,
    pub value: Option<f64>,
    pub file: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub blowup_time: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Constant,
    Cosine,
    Random,
    Matched,
    Mode,
    File,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub value: Option<f64>,
    pub amplitude: Option<f64>,
    pub wavenumber: Option<f64>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryConfig {
    pub mass: Option<f64>,
    pub decay: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonuniquenessConfig {
    pub eps: Vec<f64>,
    pub t_star: f64,
    pub dt: f64,
}

/// A bound on one metric of a command summary.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub target: Option<f64>,
    /// Absolute tolerance around `target`.
    pub tol: Option<f64>,
    /// Relative tolerance around `target`.
    pub rel: Option<f64>,
    pub equals: Option<toml::Value>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_at(text, s.start)).unwrap_or(0);
            CliError::Config { line, message: e.message().to_string() }
        })?;
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { line: 0, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config { line: key_line(&self.source, section, key), message: message.into() }
    }

    /// Range checks that need no allocation.
    fn validate(&self) -> Result<(), CliError> {
        let d = &self.domain;
        let need = match d.shape {
            ShapeKind::Interval => 2,
            ShapeKind::Rectangle => 4,
            ShapeKind::Disk => 3,
        };
        if d.bounds.len() != need {
            return Err(self.fail("domain", "bounds", format!("expected {need} numbers for this shape")));
        }
        if !(d.h_grid > 0.0) {
            return Err(self.fail("domain", "h_grid", "h_grid must be positive"));
        }
        if !(self.kernel.radius > 0.0) {
            return Err(self.fail("kernel", "radius", "kernel radius must be positive"));
        }
        if !["uniform", "tent", "bump"].contains(&self.kernel.family.as_str()) {
            return Err(self.fail("kernel", "family", format!("unknown kernel family `{}`", self.kernel.family)));
        }
        let s = &self.solver;
        if s.scheme.parse::<nlflux::evolution::Scheme>().is_err() {
            return Err(self.fail("solver", "scheme", format!("unknown scheme `{}`", s.scheme)));
        }
        if !(s.dt > 0.0) {
            return Err(self.fail("solver", "dt", "dt must be positive"));
        }
        if !(s.t_end > 0.0) {
            return Err(self.fail("solver", "t_end", "t_end must be positive"));
        }
        if s.stride == 0 {
            return Err(self.fail("solver", "stride", "stride must be at least 1"));
        }
        if !(s.adaptive_fraction > 0.0 && s.adaptive_fraction <= 1.0) {
            return Err(self.fail("solver", "adaptive_fraction", "adaptive_fraction must lie in (0, 1]"));
        }
        if !(s.threshold > 0.0) {
            return Err(self.fail("solver", "threshold", "threshold must be positive"));
        }
        let b = &self.boundary;
        match b.kind {
            BoundaryKind::Static | BoundaryKind::PowerLaw => {
                if matches!(
                    b.h,
                    CollarShape::Constant | CollarShape::Right | CollarShape::Left | CollarShape::Antisymmetric
                ) && b.value.is_none()
                {
                    return Err(self.fail("boundary", "h", "this collar shape needs `value`"));
                }
                if b.h == CollarShape::File && b.file.is_none() {
                    return Err(self.fail("boundary", "h", "h = \"file\" needs `file`"));
                }
            }
            _ => {}
        }
        if b.kind == BoundaryKind::PowerLaw {
            match (b.alpha, b.blowup_time) {
                (Some(a), Some(t)) if a > 0.0 && t > 0.0 => {
                    if !(s.t_end < t) {
                        return Err(self.fail("solver", "t_end", "t_end must stop before blowup_time"));
                    }
                }
                _ => return Err(self.fail("boundary", "kind", "power_law needs positive `alpha` and `blowup_time`")),
            }
        }
        if b.kind == BoundaryKind::Nonlinear && !b.p.is_some_and(|p| p > 0.0) {
            return Err(self.fail("boundary", "kind", "nonlinear needs a positive `p`"));
        }
        let i = &self.initial;
        match i.kind {
            InitialKind::Cosine | InitialKind::Random | InitialKind::Mode if i.amplitude.is_none() => {
                return Err(self.fail("initial", "kind", "this initial field needs `amplitude`"));
            }
            InitialKind::Cosine if i.wavenumber.is_none() => {
                return Err(self.fail("initial", "kind", "cosine needs `wavenumber`"));
            }
            InitialKind::File if i.file.is_none() => {
                return Err(self.fail("initial", "kind", "initial kind \"file\" needs `file`"));
            }
            InitialKind::Matched if b.kind != BoundaryKind::PowerLaw => {
                return Err(self.fail("initial", "kind", "matched initial data needs a power_law boundary"));
            }
            InitialKind::Mode if !matches!(b.kind, BoundaryKind::Static | BoundaryKind::None) => {
                return Err(self.fail("initial", "kind", "mode initial data needs a static or empty boundary"));
            }
            _ => {}
        }
        for path in [&b.file, &i.file].into_iter().flatten() {
            if !path.exists() {
                return Err(self.fail("", "file", format!("file {} does not exist", path.display())));
            }
        }
        if let Some(n) = &self.nonuniqueness {
            if n.eps.len() < 2 || n.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(self.fail("nonuniqueness", "eps", "eps needs at least two positive values"));
            }
            if !(n.t_star > 0.0) || !(n.dt > 0.0) {
                return Err(self.fail("nonuniqueness", "t_star", "t_star and dt must be positive"));
            }
        }
        Ok(())
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (top level for an empty section);
/// the section header line when the key is absent, zero when neither is.
fn key_line(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = n + 1;
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return n + 1;
                }
            }
        }
    }
    header
}
