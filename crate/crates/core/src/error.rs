use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("singular system: pivot {pivot:.3e} below tolerance {tol:.3e}")]
    Singular { pivot: f64, tol: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("unsupported dimensions: {0}")]
    UnsupportedDims(String),

    #[error("power constraint group `{0}` is all zero")]
    DegenerateGroup(&'static str),

    #[error("no samples supplied")]
    Empty,

    #[error("adaptation diverged: {0}")]
    Diverged(String),

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("curve {curve}: {source}")]
    Curve { curve: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
