//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by any module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimensions of two values that must agree do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An index or cut point lies outside the valid range.
    #[error("out of range: {0}")]
    Range(String),

    /// A configuration value violates its contract.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A binary or JSON artifact on disk is malformed.
    #[error("bad format in {path:?}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Correlation is undefined (zero variance on one side).
    #[error("undefined correlation: {0}")]
    Correlation(String),

    /// Two reports cannot be compared.
    #[error("incomparable reports: {0}")]
    Comparison(String),

    /// An item referenced by a query could not be scored.
    #[error("unscorable item {item_id} for query {query_id}: {reason}")]
    Unscorable {
        query_id: String,
        item_id: String,
        reason: String,
    },

    #[error("io error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
