use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A rejected CSV row: physical line number (header is line 1) and the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRejection {
    pub line: u64,
    pub column: String,
    pub reason: String,
}

impl std::fmt::Display for RowRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: column `{}`: {}", self.line, self.column, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{layer}`: {detail}")]
    Dimension { layer: String, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("{} row(s) rejected: {}", .0.len(), .0.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRows(Vec<RowRejection>),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged {
        epoch: usize,
        history: Box<crate::train::TrainHistory>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
