use std::path::PathBuf;

use crate::backends::BackendError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("LaTeX toolchain missing: `{0}` could not be executed")]
    ToolchainMissing(String),

    #[error("rasterization failed: {0}")]
    RenderFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Corpus {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Metric(#[from] tikzgym_core::imgmetrics::MetricError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors that make a whole run meaningless, as opposed to per-record
    /// failures.
    pub fn is_environment(&self) -> bool {
        matches!(
            self,
            Error::ToolchainMissing(_) | Error::Config(_) | Error::Io { .. } | Error::Corpus { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
