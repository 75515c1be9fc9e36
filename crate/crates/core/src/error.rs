//! Crate-wide error type.
//!
//! Every failure is classified so callers (and the CLI exit-code mapping)
//! can tell usage mistakes from bad data from numeric blow-ups.

use std::path::PathBuf;
use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must share a parameter layout (or a batch and a
    /// model input) do not line up.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A non-finite value appeared where the contract requires finite
    /// arithmetic.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An argument is outside its mathematical domain (e.g. a sparsity
    /// outside [0, 1]).
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation was called in a way its contract forbids (empty mask
    /// list, mismatched pruned counts, empty table, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A binary or text artifact does not match its documented format.
    /// `offset` is the byte position at which decoding failed.
    #[error("format error in {path:?} at byte {offset}: {what}")]
    Format {
        path: PathBuf,
        offset: u64,
        what: String,
    },

    /// Unknown architecture id or an otherwise invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// An artifact exists but its digest or recorded lineage does not match.
    #[error("corruption error: {0}")]
    Corruption(String),

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn alignment(msg: impl Into<String>) -> Self {
        Error::Alignment(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn corruption(msg: impl Into<String>) -> Self {
        Error::Corruption(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, what: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            what: what.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
