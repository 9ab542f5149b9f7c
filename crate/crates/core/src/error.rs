use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot remove an item from empty statistics")]
    EmptyStats,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("time warp is not monotone: sum k*pi*|c_k| = {0:.6} (must be < 1)")]
    NonMonotoneWarp(f64),

    #[error("transform is not invertible: {0}")]
    NotInvertible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("cached statistics drifted from their members (max deviation {0:e})")]
    StatsDrift(f64),

    #[error("worker failure: {0}")]
    Worker(String),
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
