use thiserror::Error;

use crate::model::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown preset `{0}` (expected voter, exclusion or bcpp)")]
    UnknownPreset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {index} (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("grid mismatch: expected {expected} nodes, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
