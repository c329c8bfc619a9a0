use std::io;

use thiserror::Error;

/// Failure kinds for checkpoint decoding. Each maps to its own exit code in the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointFault {
    BadMagic,
    VersionMismatch { found: u32, expected: u32 },
    ChecksumMismatch,
    Truncated,
    Malformed,
}

impl std::fmt::Display for CheckpointFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointFault::BadMagic => write!(f, "not a checkpoint (bad magic)"),
            CheckpointFault::VersionMismatch { found, expected } => {
                write!(f, "format version {found}, expected {expected}")
            }
            CheckpointFault::ChecksumMismatch => write!(f, "checksum mismatch"),
            CheckpointFault::Truncated => write!(f, "file truncated"),
            CheckpointFault::Malformed => write!(f, "malformed payload"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(CheckpointFault),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn contract_err(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
