use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QtomoError {
    #[error(transparent)]
    Core(#[from] qtomo_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl QtomoError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        QtomoError::Parse { line, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        QtomoError::Io { path: path.into(), source }
    }

    /// Process exit code: 2 bad input, 3 state generation gave up,
    /// 4 an eigensolver failed to converge.
    pub fn exit_code(&self) -> i32 {
        match self {
            QtomoError::Core(qtomo_core::Error::RetryLimit(_)) => 3,
            QtomoError::Core(qtomo_core::Error::NoConvergence { .. }) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, QtomoError>;
