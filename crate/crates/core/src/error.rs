use thiserror::Error;

/// Errors produced by the simulator and the precoder optimizer.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a formula (e.g. a semi-angle of 95 degrees).
    #[error("domain error: {0}")]
    Domain(String),

    /// A scene, scenario or run configuration is malformed.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested combination is valid in principle but not supported.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A precoder or share vector violates a constraint.
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// The optimizer produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
