use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The requested configuration is outside what the model supports.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// An integration range leaves too much probability mass outside.
    #[error("integration range misses {missing:.3e} of the probability mass (limit {limit:.1e})")]
    Coverage { missing: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
