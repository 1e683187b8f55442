//! Crate-wide error type.
//!
//! Variants are grouped by how callers should react: `Dimension`/`Contract`
//! are programming or configuration mistakes, `Format`/`Io` are data problems,
//! `Divergence` and `Verification` are runtime outcomes the CLI maps onto
//! dedicated exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An operation was invoked outside its contract (bad argument, wrong
    /// node kind, value out of range).
    #[error("contract error: {0}")]
    Contract(String),

    /// Malformed or truncated on-disk data; `offset` is the byte position at
    /// which decoding failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A requested channel name is absent from the recording.
    #[error("channel not found: {0}")]
    MissingChannel(String),

    /// Dataset unusable for the requested split (too small, empty side).
    #[error("split error: {0}")]
    Split(String),

    /// Bad configuration value or unknown configuration key.
    #[error("config error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("divergence at epoch {epoch}, batch {batch}: loss is not finite")]
    Divergence { epoch: usize, batch: usize },

    /// A verification pass (gradient check, path agreement) missed tolerance.
    #[error("verification failure: {0}")]
    Verification(String),

    /// A verification corpus case is missing or unreadable.
    #[error("corpus error: {0}")]
    Corpus(String),
}

pub type Result<T> = std::result::Result<T, Error>;
