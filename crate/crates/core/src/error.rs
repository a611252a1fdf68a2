use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structural problem with an input file (bad header, missing property, truncation).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input carrying an unusable value.
    #[error("data error at element {index}: {message}")]
    Data { index: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty scene: {0}")]
    EmptyScene(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
