use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what} not found: {path}")]
    NotFound { what: &'static str, path: PathBuf },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("no location anchors for category {0:?}")]
    NoAnchors(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("architecture error: {0}")]
    Arch(String),
    #[error("generation budget exhausted after {tried} candidates ({accepted}/{requested} accepted)")]
    BudgetExhausted {
        tried: u64,
        accepted: usize,
        requested: usize,
    },
    #[error("image codec error on {path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("numerical error: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
