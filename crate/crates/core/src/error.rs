use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants fall in two groups: input/validation problems (bad files,
/// out-of-support values, invalid configuration) and numerical failures
/// (singular matrices, underflowing probabilities, degenerate fits).
/// [`Error::is_numerical`] tells them apart, which the CLI uses for its
/// exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("model not identifiable for this schema: {0}")]
    NotIdentifiable(String),

    #[error("value {value} outside the support of the {family} margin")]
    OutOfSupport { value: f64, family: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numerically singular matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("degenerate region: {0}")]
    Degenerate(String),

    #[error("fit failed: {0}")]
    FitFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::Singular { .. } | Error::Degenerate(_) | Error::FitFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
