use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error("{}: line {line} has {found} columns, expected {expected}", path.display())]
    RaggedRow {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{}: line {line}, column {column}: {value:?} is not a number", path.display())]
    NonNumeric {
        path: PathBuf,
        line: usize,
        column: usize,
        value: String,
    },

    #[error("{}: label column {label} not found", path.display())]
    MissingLabelColumn { path: PathBuf, label: String },

    #[error("{}: only one class present, classification is undefined", path.display())]
    SingleClass { path: PathBuf },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("non-finite {component} at iteration {iteration}")]
    NonFinite {
        component: &'static str,
        iteration: usize,
    },

    #[error("{}: {message}", path.display())]
    ModelFormat { path: PathBuf, message: String },

    #[error("unsupported model version {0:?}")]
    UnsupportedVersion(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
