//! Crate-wide error type.
//!
//! Guard refusals are a distinct variant because the CLI maps them to their
//! own exit code: a refused brute-force enumeration is an expected outcome,
//! not a bug.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on parameters was violated (bad `n`, `omega`, degree...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A size guard on a brute-force enumeration or dense assembly was hit.
    #[error("guard exceeded: {0}")]
    GuardExceeded(String),

    /// Numeric trouble (non-finite entries, degenerate regression grid...).
    #[error("numeric: {0}")]
    Numeric(String),

    /// An exact invariant that the construction guarantees failed to hold.
    /// Reaching this variant signals an implementation bug, never user error.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
    pub fn guard(msg: impl Into<String>) -> Self {
        Error::GuardExceeded(msg.into())
    }
}
