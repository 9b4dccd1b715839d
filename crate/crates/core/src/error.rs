//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the preprocessing, data, training, and metric layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("condition error: {0}")]
    Condition(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("sampling diverged: {0}")]
    SamplerDiverged(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error at {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        CoreError::Json {
            path: path.into(),
            source,
        }
    }
}
