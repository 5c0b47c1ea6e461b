//! Harness error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violated its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Propagated solver / metric / retrieval error.
    #[error(transparent)]
    Core(#[from] cadalign_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
