use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance matrix violates the uncertainty relation (min eigenvalue {min_eigenvalue:e})")]
    Unphysical { min_eigenvalue: f64 },

    #[error("invalid moments: mean {mean}, variance {var}: {reason}")]
    InvalidMoments { mean: f64, var: f64, reason: &'static str },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; first non-finite value in {layer}")]
    NonFiniteLoss { epoch: usize, batch: usize, layer: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
