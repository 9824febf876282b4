//! Error type shared across the crate.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
///
/// The variants are grouped so callers (notably the CLI) can triage them:
/// configuration problems, data problems (linking, missing identifiers,
/// malformed files) and numeric failures during training.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration or unusable parameter combination.
    Config(String),
    /// Bad or insufficient input data (linking failures, missing ids, ...).
    Data(String),
    /// Underlying I/O failure.
    Io(io::Error),
    /// A binary file did not start with the expected magic bytes.
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    /// A binary file carries a format version this build cannot read.
    UnsupportedVersion { expected: u32, found: u32 },
    /// A binary file ended before all declared content was read.
    Truncated(String),
    /// An id table contained the same identifier twice.
    DuplicateId(String),
    /// Training produced a non-finite loss value.
    NonFiniteLoss {
        epoch: usize,
        sample_index: usize,
        doc_key: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
            Error::BadMagic { expected, found } => write!(
                f,
                "bad file magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            Error::UnsupportedVersion { expected, found } => {
                write!(f, "unsupported format version {found} (expected {expected})")
            }
            Error::Truncated(what) => write!(f, "truncated file while reading {what}"),
            Error::DuplicateId(id) => write!(f, "duplicate identifier {id:?}"),
            Error::NonFiniteLoss {
                epoch,
                sample_index,
                doc_key,
            } => write!(
                f,
                "non-finite loss at epoch {epoch}, sample {sample_index} (doc key {doc_key:?})"
            ),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
