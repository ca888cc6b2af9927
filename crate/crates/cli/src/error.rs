use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 1-based; zero when the problem is not tied to a line.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unknown preset `{0}`; run `nlflux --help` for the list")]
    UnknownPreset(String),

    #[error("no blow-up detected up to t = {final_time} although one is predicted ({reason})")]
    MissingBlowup { final_time: f64, reason: String },

    #[error("{0}")]
    Core(#[from] nlflux::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{failed} of {total} preset checks failed")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    /// Process exit status: 2 invalid config, 3 incompatible stationary
    /// flux, 4 missing predicted blow-up, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::UnknownPreset(_) => 2,
            CliError::Core(nlflux::Error::Config(_)) => 2,
            CliError::Core(nlflux::Error::Incompatible { .. }) => 3,
            CliError::MissingBlowup { .. } => 4,
            _ => 1,
        }
    }
}
