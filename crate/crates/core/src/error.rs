//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by alignment, voxelization, retrieval and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Gradient of the solve is not well-defined at this input.
    #[error("ill-conditioned gradient: {0}")]
    IllConditionedGradient(String),

    /// A numeric oracle (e.g. finite differences) hit a non-finite value.
    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// Retrieval produced an empty candidate set.
    #[error("empty candidate pool: {0}")]
    EmptyPool(String),

    /// File or serialization problem in one of the on-disk formats.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON in one of the on-disk formats.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
