use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the factorization library and its file formats.
#[derive(Debug, Error)]
pub enum PnmuError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PnmuError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        PnmuError::Shape(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        PnmuError::Parameter(msg.into())
    }

    /// Process exit code used by the CLI: 2 for malformed input, 3 for bad parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            PnmuError::Parameter(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PnmuError>;
