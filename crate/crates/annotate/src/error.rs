use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("version conflict on {id}: expected {expected}, record is at {actual}")]
    Conflict { id: String, expected: u64, actual: u64 },
    #[error("generation already running for {0}")]
    Busy(String),
    #[error("unknown record {0}")]
    NotFound(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("generator failure: {0}")]
    Generator(String),
    #[error("export refused, unresolved records: {}", .ids.join(","))]
    Unresolved { ids: Vec<String> },
    #[error("event log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] medthink::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
