//! Error type shared across the library.

use thiserror::Error;

/// Errors raised by kernels, estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, out-of-range parameters,
    /// missing capabilities (e.g. a kernel that needs an ensemble run
    /// single-chain), malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mathematical contract was violated at runtime: NaN in an
    /// acceptance computation, a chain sitting at a zero-density point,
    /// a shrink loop that failed to terminate, an empty slice interval.
    /// These indicate bugs in the target or a pathological setup and are
    /// never silently swallowed.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerical linear algebra failure (e.g. Cholesky jitter escalation
    /// exhausted, non-positive innovation variance).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// I/O failure in the CLI harness.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
