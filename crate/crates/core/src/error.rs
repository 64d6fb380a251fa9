use thiserror::Error;

/// Errors raised by samplers, estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimension, count, base, or a count that is not representable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Arguments violate an operation's precondition (e.g. dimension mismatch).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Inputs outside the range where a closed form is valid.
    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
