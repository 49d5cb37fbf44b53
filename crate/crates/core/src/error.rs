use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("kernel matrix is ill-conditioned: Cholesky failed with jitter up to {max_jitter:e}")]
    IllConditioned { max_jitter: f64 },

    #[error("training diverged: non-finite value for parameter `{parameter}`")]
    Divergence { parameter: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is numerical rather than a bad input or config.
    pub fn is_numerical(&self) -> bool {
        matches!(self, GpError::IllConditioned { .. } | GpError::Divergence { .. })
    }
}
