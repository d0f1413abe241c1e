//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("affine term {term}: coefficient evaluated to non-finite value {value} at {point}")]
    NonFiniteCoefficient {
        term: usize,
        value: f64,
        point: String,
    },

    #[error("linear solve failed at {point}: {reason}")]
    Solve { point: String, reason: String },

    #[error("eigen solver failed: {0}")]
    Eigen(String),

    #[error("linear program infeasible (inconsistent constraint data)")]
    LpInfeasible,

    #[error("parameter outside trained domain: {0}")]
    Domain(String),

    #[error("stability lower bound not positive at {point}; refine the stability model")]
    NonPositiveStability { point: String },

    #[error("snapshot at {point} is numerically redundant")]
    RedundantSnapshot { point: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
