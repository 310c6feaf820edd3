use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The input does not span the space it lives in (collinear points,
    /// rank-deficient generators, constant data).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension {dim} is not supported (maximum {max}); {hint}")]
    UnsupportedDimension {
        dim: usize,
        max: usize,
        hint: &'static str,
    },

    #[error("covariance matrix is singular or ill-conditioned (condition number {condition:.3e}); {hint}")]
    SingularCovariance { condition: f64, hint: &'static str },

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("malformed CSV at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }
}
