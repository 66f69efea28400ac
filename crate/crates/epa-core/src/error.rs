use thiserror::Error;

/// Errors shared by all estimators and tests.
#[derive(Debug, Clone, Error)]
pub enum EpaError {
    #[error("non-finite value at unit {unit}, period {period}")]
    NonFinite { unit: usize, period: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A long-run variance estimate came out nonpositive; the statistic is undefined.
    #[error("degenerate variance{0}")]
    DegenerateVariance(String),

    #[error("singular covariance")]
    SingularCovariance,

    #[error("indefinite covariance")]
    IndefiniteCovariance,

    /// A test cannot be computed for the given panel dimensions.
    #[error("{0}")]
    Infeasible(String),

    #[error("eigendecomposition failed")]
    EigenFailed,
}

impl EpaError {
    pub fn degenerate() -> Self {
        EpaError::DegenerateVariance(String::new())
    }

    pub fn degenerate_at_unit(i: usize) -> Self {
        EpaError::DegenerateVariance(format!(" at unit {i}"))
    }
}

pub type Result<T> = std::result::Result<T, EpaError>;
