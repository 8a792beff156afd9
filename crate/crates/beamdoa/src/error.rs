//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by simulation, estimation, training, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input is structurally valid but degenerate (e.g. a zero-norm profile).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Internal state does not match what an operation requires
    /// (e.g. a forward cache used with a different model).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A computation produced non-finite values.
    #[error("numeric fault: {0}")]
    NumericFault(String),

    /// A configuration file or key failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// A data file (scan CSV, model file) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
