use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} inputs failed")]
    Failed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }

    /// 1 for bad data or failed IO, 2 for bad configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingCheckpoint(_) => 2,
            Self::Data(_) | Self::Io { .. } | Self::Failed { .. } => 1,
        }
    }
}
