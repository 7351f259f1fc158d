use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MlgError>;

#[derive(Debug, Error)]
pub enum MlgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dual ascent diverged at iteration {iteration}{}", layer.map(|m| format!(" (layer {})", m + 1)).unwrap_or_default())]
    Divergence { iteration: usize, layer: Option<usize> },

    #[error("rank target not achieved: {0}")]
    RankNotAchieved(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {col}: cannot parse {cell:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        cell: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("row count mismatch: {first} has {first_rows} rows but {second} has {second_rows}")]
    RowMismatch {
        first: PathBuf,
        first_rows: usize,
        second: PathBuf,
        second_rows: usize,
    },
}

impl MlgError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MlgError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            MlgError::Parameter(_) | MlgError::InvalidSize(_) | MlgError::Index(_)
        )
    }
}
