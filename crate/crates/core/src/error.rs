use thiserror::Error;

/// Errors raised across the library.
///
/// The variants map onto the CLI exit-code classes: configuration-like
/// problems (`InvalidInput`, `Parse`, `Io`), numeric failures, and solver
/// ceilings.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate grid: cube side {side} is below 1")]
    DegenerateGrid { side: f64 },

    #[error("point {coords:?} lies outside the half-open cube")]
    OutOfDomain { coords: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("mass mismatch: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("size ceiling exceeded: {what} ({size} > {limit})")]
    CeilingExceeded {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
