use thiserror::Error;

use crate::fxp::FxpError;
use crate::tensorio::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("sparsity engine protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Fxp(#[from] FxpError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
