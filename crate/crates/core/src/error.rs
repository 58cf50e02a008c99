use std::fmt;

use thiserror::Error;

/// Which matrix failed to invert; carried by [`Error::Singular`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    /// Mean Hessian of the second-stage log-likelihood.
    Hessian,
    /// Mean Jacobian of the first-stage moment gradients.
    FirstStageM,
    /// Cross-product of the first-stage design.
    FirstStageDesign,
    /// Anything else.
    General,
}

impl fmt::Display for MatrixRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MatrixRole::Hessian => "Hessian",
            MatrixRole::FirstStageM => "first-stage M",
            MatrixRole::FirstStageDesign => "first-stage design",
            MatrixRole::General => "matrix",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation must satisfy |rho| < 1, got {0}")]
    InvalidCorrelation(f64),

    #[error("non-finite objective value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("{role} is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { role: MatrixRole, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("observation {index}: non-finite log-likelihood contribution")]
    NonFiniteLikelihood { index: usize },

    #[error("first stage: {0}")]
    FirstStage(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
