use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnmError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("matrix is not positive definite: {0}")]
    Definiteness(String),
    #[error("ill-conditioned problem: {0}")]
    Conditioning(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, AnmError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AnmError::Validation(msg.into()))
}
