use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] g2dm_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("run failed for unseen domain {unseen}, seed {seed}: {source}")]
    Run { unseen: String, seed: u64, source: Box<Error> },
}

impl Error {
    /// Stable category printed by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Core(e) => e.category(),
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json { .. } => "parse",
            Error::Run { source, .. } => source.category(),
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Error {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Core(g2dm_core::Error::Argument(msg.into()))
}
