use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent channel arithmetic in a network description.
    #[error("network construction: {0}")]
    Construction(String),
    /// Tensor or image dimensions do not match what an operation needs.
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    /// Operation not allowed in the current state (e.g. head swap on a flow network).
    #[error("invalid state: {0}")]
    State(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
