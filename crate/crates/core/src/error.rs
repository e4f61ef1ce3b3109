use std::io;
use std::path::PathBuf;

use crate::corpus::CorpusError;
use crate::ndjson::NdjsonError;
use crate::regression::RegressionError;
use crate::report::ReportError;
use crate::semantics::SemanticsError;
use crate::sentiment::SentimentError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const INPUT_FORMAT: i32 = 2;
    pub const PROVIDER: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Ndjson(#[from] NdjsonError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Sentiment(SentimentError::ProviderUnavailable(_))
            | Error::Semantics(SemanticsError::ProviderUnavailable(_)) => exit::PROVIDER,
            _ => exit::INPUT_FORMAT,
        }
    }
}
