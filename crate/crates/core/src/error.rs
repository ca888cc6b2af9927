use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Experiment parameters that cannot produce a valid discretization.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Step produced non-finite values; consumed by the runner as a blow-up trigger.
    #[error("overflow at t = {time}")]
    Overflow { time: f64 },

    /// The stationary problem was refused because the flux has nonzero net mass.
    #[error("incompatible boundary flux: compat residual {residual:e} exceeds tolerance {tolerance:e}")]
    Incompatible { residual: f64, tolerance: f64 },

    /// A post-processing diagnostic could not be evaluated on the given data.
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
