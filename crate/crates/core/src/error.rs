use thiserror::Error;

/// Errors raised by the workbench.
///
/// The variants double as the CLI's error classes, so keep them coarse.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("empty typical set: {0}")]
    EmptyTypicalSet(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
