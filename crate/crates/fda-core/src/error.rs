use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum FdaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown input format {0:?}")]
    UnknownFormat(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("users with missing or unmapped sensitive attribute: {}", offenders.join(", "))]
    UnmappedAttribute { offenders: Vec<String> },

    #[error("group {0} is empty after assignment")]
    EmptyGroup(u8),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {quantity} at epoch {epoch}")]
    Diverged { quantity: &'static str, epoch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FdaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FdaError::Io {
            path: path.into(),
            source,
        }
    }
}
