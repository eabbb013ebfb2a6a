use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OspError>;

#[derive(Debug, Error)]
pub enum OspError {
    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("index {index} out of range for series of length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid forecaster spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("MASE undefined: in-sample series has zero mean absolute difference")]
    UndefinedScale,

    #[error("MAPE undefined: actual value at position {0} is zero")]
    UndefinedMape(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("series ineligible: {0}")]
    Ineligible(String),

    #[error("no eligible series in training set")]
    EmptyTrainingSet,

    #[error("forecast failed: {0}")]
    Forecast(String),

    #[error("invalid training data: {0}")]
    Training(String),

    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OspError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OspError::Io {
            path: path.into(),
            source,
        }
    }
}
