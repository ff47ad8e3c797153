use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("factorization failed: non-positive pivot {value:e} at index {index}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("constant kernel cannot be normalized (all entries equal {0})")]
    ConstantKernel(f64),

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kernel weights: {0}")]
    InvalidWeights(String),

    #[error("kernel cost h[{index}] = {value:e} is not positive; weight update undefined")]
    NonPositiveCost { index: usize, value: f64 },

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report error: {0}")]
    Report(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps this error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
