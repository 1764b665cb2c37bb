use thiserror::Error;

/// Errors surfaced by construction and estimation routines.
///
/// Non-fatal conditions (under-sampled cells, exhausted candidate budgets)
/// are reported as warnings on the produced artifact instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
