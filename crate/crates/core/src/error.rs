use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("eigensolver did not converge on a {n}x{n} matrix (residual {residual:e})")]
    EigenNonConvergence { n: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix dimension {n} exceeds the dense limit {limit}")]
    DenseLimitExceeded { n: usize, limit: usize },

    #[error("starting vector has zero norm")]
    ZeroVector,

    #[error("non-finite value encountered at Lanczos iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("projection produced a vanishing vector: {0}")]
    Underflow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("adversary emitted an invalid gain at step {t}: {reason}")]
    InvalidGain { t: usize, reason: String },

    #[error("unknown adversary kind `{0}`")]
    UnknownAdversary(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
