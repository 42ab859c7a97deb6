use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the unmixing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("value error: {0}")]
    Value(String),

    /// Input lies outside the domain of a physical model (e.g. reflectance >= 1
    /// for the albedo conversion).
    #[error("out-of-model: {0}")]
    OutOfModel(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
