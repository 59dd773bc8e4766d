use std::path::PathBuf;

use crate::nn::Network;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// Training diverged or produced non-finite values. Carries the best
    /// autoencoder snapshot seen before the failure, when one exists.
    #[error("training error: {message}")]
    Training {
        message: String,
        snapshot: Option<Box<Network>>,
    },

    #[error("audit error: {0}")]
    Audit(String),

    #[error("parse error in {path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn training(message: impl Into<String>) -> Self {
        Error::Training {
            message: message.into(),
            snapshot: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
