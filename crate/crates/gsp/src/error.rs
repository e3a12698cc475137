use thiserror::Error;

/// Library-wide error type.
///
/// The variants map onto the CLI exit codes: parse/input errors are user
/// errors, guard violations protect factorial-size enumerations, and
/// contract/internal errors indicate misuse or a broken invariant.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file or string.
    #[error("parse error: {0}")]
    Parse(String),
    /// Semantically invalid argument (out-of-range node, overlapping sets, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Linear algebra failure (singular or non-PD submatrix, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// An enumeration guard was exceeded; pass `force` to override.
    #[error("guard exceeded: {0}")]
    Guard(String),
    /// An internal invariant failed; this is a bug.
    #[error("internal invariant failed: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
