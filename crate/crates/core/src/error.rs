use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Schema or value violation in an input; the message carries its location.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("facility {0} has an empty catchment (no recorded visits)")]
    EmptyCatchment(String),

    #[error("zone {0} is not part of the zone set")]
    UnknownZone(String),

    #[error("grid geometry mismatch in layer {0}")]
    GridMismatch(String),

    #[error("no weight configured for AEP {0}")]
    MissingWeight(String),

    #[error("facility {facility} is missing {what}")]
    MissingInput { facility: String, what: String },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("infeasible scenario parameters: {0}")]
    Infeasible(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
