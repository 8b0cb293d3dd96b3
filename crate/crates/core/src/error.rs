use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix violates symmetry: max |A[i][j] - A[j][i]| = {asymmetry:e} exceeds {limit:e}")]
    NotSymmetric { asymmetry: f64, limit: f64 },

    #[error("matrix violates positive semidefiniteness: eigenvalue {eigenvalue:e} is below -{limit:e}")]
    NotPsd { eigenvalue: f64, limit: f64 },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite; regularize it (e.g. add the noise variance) before factorizing")]
    NotPositiveDefinite,

    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("infeasible rank specification: {0}")]
    InfeasibleRanks(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
