use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Riccati iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    RiccatiNotConverged { iters: usize, residual: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("linear program is {0}")]
    LpStatus(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant-set determination exceeded cap {cap} (last violated row {row})")]
    HorizonCapExceeded { cap: usize, row: usize },

    #[error("slack Hessian is not positive definite at step {0}")]
    SlackHessian(usize),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
