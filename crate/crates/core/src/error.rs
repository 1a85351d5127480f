use std::path::PathBuf;

use thiserror::Error;

use crate::calendar::YearMonth;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{file}: row {row}: {message}")]
    Row {
        file: String,
        /// 1-based data row index (the header is row 0).
        row: usize,
        message: String,
    },

    #[error("{file}: duplicate key {key}")]
    DuplicateKey { file: String, key: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weather coverage missing for {field} in {month}")]
    Coverage { field: &'static str, month: YearMonth },

    #[error("no weight recorded for animal {eid} in {month} and imputation is disabled")]
    MissingCell { eid: String, month: YearMonth },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("no eligible animals")]
    NoEligibleAnimals,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("scaler has not been fitted")]
    Unfitted,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("collinear design: {0}")]
    Collinear(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every grid candidate failed: {0}")]
    GridExhausted(String),

    #[error("unknown animal {0}")]
    UnknownAnimal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
