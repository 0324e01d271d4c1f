use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pointer_sim_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("all {0} sweep rows failed")]
    AllRowsFailed(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use pointer_sim_core::Error as E;
        match self {
            CliError::Core(E::Capacity { .. }) => 3,
            CliError::Core(E::Resolution { .. }) => 4,
            CliError::Core(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } => 1,
            CliError::AllRowsFailed(_) => 5,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
