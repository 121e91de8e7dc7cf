//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a mathematical domain (out-of-range pixel, non-unit ray, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Grid/tensor dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value (stride, channel count, camera parameters, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative numeric procedure failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The input carries no usable data (empty valid set, non-positive median, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A requested extent or index exceeds what the input provides.
    #[error("range error: {0}")]
    Range(String),

    /// A file did not match the expected byte format.
    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
