//! Error taxonomy shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Precondition violated by the caller (shape mismatch, bad parameter).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested size or feature beyond what the implementation supports.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative or direct solve failed to reach its tolerance.
    #[error("numerical failure in {context}: residual {residual}")]
    NumericalFailure { context: String, residual: f64 },

    /// A synthesis ran out of time budget before reaching its tolerance.
    #[error("budget exceeded: achieved error {achieved}, requested {requested}")]
    BudgetExceeded { achieved: f64, requested: f64 },

    /// A projection cannot meet its tolerance at the configured resolution.
    #[error("resolution exceeded: projection residual {residual}, budget {budget}")]
    ResolutionExceeded { residual: f64, budget: f64 },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
