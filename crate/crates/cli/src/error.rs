use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or missing required inputs.
    #[error("{0}")]
    Usage(String),

    /// An input file could not be read.
    #[error("{0}")]
    Input(lifeline_core::Error),

    /// Input data failed validation or a computation failed.
    #[error("{0}")]
    Runtime(lifeline_core::Error),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: lifeline_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 1,
            CliError::Runtime(_) | CliError::Write { .. } => 2,
        }
    }
}

impl From<lifeline_core::Error> for CliError {
    fn from(e: lifeline_core::Error) -> Self {
        match e {
            lifeline_core::Error::Io { .. } => CliError::Input(e),
            other => CliError::Runtime(other),
        }
    }
}
