use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed manifest: {source}", path.display())]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported container: {0}")]
    Format(String),

    #[error("{file}: expected {expected} bytes, found {found}")]
    PayloadSize {
        file: String,
        expected: u64,
        found: u64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("bag {bag_id}: non-finite embedding value")]
    NonFinite { bag_id: String },

    #[error("bag {bag_id}: {reason}")]
    InvalidBag { bag_id: String, reason: String },

    #[error("patient leakage: patient {patient_id} appears in both {first} and {second}")]
    PatientLeakage {
        patient_id: String,
        first: String,
        second: String,
    },

    #[error("{split} split contains a single class; AUC is undefined")]
    SingleClass { split: String },

    #[error("non-finite value in {path}")]
    NonFiniteParam { path: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
