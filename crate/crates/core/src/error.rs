use thiserror::Error;

/// Errors raised by the certificate pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Operation evaluated outside its domain (0 in a divisor, log of a nonpositive interval, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An endpoint left the finite f64 range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Work or memory budget exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A certified inequality did not hold.
    #[error("verification failed: {what}: {detail}")]
    Verification { what: String, detail: String },

    /// Neither interval separation nor exact comparison could order two values.
    #[error("undecidable ordering: {0}")]
    UndecidableOrdering(String),

    /// An operation was called without its certified precondition.
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// Fixed-point iteration left the admissible ball or failed to settle.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A series tail could not be closed by a ratio test.
    #[error("tail divergence: {0}")]
    TailDivergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A modulus does not split as (Q_i-part) * (coprime new factor).
    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("empty uncovered set: {0}")]
    EmptyFiber(String),

    #[error("size limit: {0}")]
    Size(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn verification(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Verification {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
