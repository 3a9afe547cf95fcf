use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] kmerstream::Error),
    #[error(transparent)]
    Sim(#[from] kmerstream_sim::SimError),
    #[error("{0}: no manifest.json")]
    MissingManifest(PathBuf),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.into(),
        }
    }

    /// 1 for bad data or failed I/O, 2 for misuse.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Sim(kmerstream_sim::SimError::UnknownScenario(_)) => 2,
            _ => 1,
        }
    }
}
