use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("control input {index} has norm {norm} above u_max = {u_max}")]
    ControlLimit { index: usize, norm: f64, u_max: f64 },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("human {id} has insufficient history ({len} observations, need 2)")]
    InsufficientHistory { id: u32, len: usize },

    #[error("replay predictor needs recorded futures for human {0}")]
    MissingFuture(u32),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("controller failure: {0}")]
    Controller(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
