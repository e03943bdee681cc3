use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum TomoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Requested computation exceeds an exhaustive-enumeration budget.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// Average degree c <= 1: no giant component exists.
    #[error("sub-critical average degree c = {0} (need c > 1)")]
    SubCritical(f64),

    /// A quartet's solved internal lengths are inconsistent (negative arm
    /// beyond tolerance).
    #[error("degenerate quartet: {0}")]
    DegenerateQuartet(String),

    #[error("route validation failed: {0}")]
    InvalidRoute(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TomoError>;
