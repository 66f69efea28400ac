//! CLI error type mapping every failure to a documented exit code.

use epa_core::EpaError;

/// Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 infeasible test.
#[derive(Debug)]
pub enum CliError {
    /// Bad input data, arguments or configuration (exit 2).
    Input(String),
    /// Degenerate, singular or otherwise failed numerics (exit 3).
    Numerical(String),
    /// A test that cannot be run on this panel shape (exit 4).
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(message: String) -> Self {
        CliError::Input(message)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::Infeasible(m) => m,
        }
    }
}

impl From<EpaError> for CliError {
    fn from(e: EpaError) -> Self {
        let message = e.to_string();
        match e {
            EpaError::Infeasible(_) => CliError::Infeasible(message),
            EpaError::DegenerateVariance(_)
            | EpaError::SingularCovariance
            | EpaError::IndefiniteCovariance
            | EpaError::EigenFailed => CliError::Numerical(message),
            EpaError::NonFinite { .. } | EpaError::Shape(_) | EpaError::InvalidArgument(_) => {
                CliError::Input(message)
            }
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl std::error::Error for CliError {}
