use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series `{id}` has {len} points, shorter than window size {window}")]
    SeriesTooShort { id: String, len: usize, window: usize },

    #[error("invalid series `{id}`: {reason}")]
    InvalidSeries { id: String, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("detector config schema error for {kind}: {reason}")]
    Schema { kind: String, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("label out of range: {0}")]
    LabelOutOfRange(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incompatible backbone tensors: {}", names.join(", "))]
    IncompatibleTensors { names: Vec<String> },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("model format: {0}")]
    Format(String),

    #[error("invalid config: {}", problems.join("; "))]
    Config { problems: Vec<String> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
