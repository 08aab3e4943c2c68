//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for graph construction, sampling, statistics, and
/// structure discovery.
#[derive(Debug, Error)]
pub enum Error {
    /// A graph or configuration failed structural validation.
    #[error("invalid structure: {0}")]
    Structure(String),

    /// A name or index did not resolve to a variable or column.
    #[error("unknown reference: {0}")]
    Reference(String),

    /// Input data failed validation (shape, finiteness, duplicates).
    #[error("invalid data: {0}")]
    Data(String),

    /// An operation was called with arguments outside its contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numerical routine could not produce a reliable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Problem size exceeds a documented implementation limit.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// JSON (de)serialization failed.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// An underlying I/O operation failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
