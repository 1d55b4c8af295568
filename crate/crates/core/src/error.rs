use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix decomposition failed: {0}")]
    DecompositionFailure(String),

    /// An iterative or direct solve did not produce an acceptable answer.
    /// `residual` carries the last relative residual (or a condition estimate
    /// for direct solves) when one is available.
    #[error("solver failure: {message}")]
    SolverFailure { message: String, residual: Option<f64> },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>, residual: Option<f64>) -> Self {
        Error::SolverFailure {
            message: msg.into(),
            residual,
        }
    }

    /// Process exit code used by the command line front end: 2 for bad
    /// input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Parse { .. }
            | Error::Unsupported(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Io(_) => 2,
            Error::InvalidState(_)
            | Error::DecompositionFailure(_)
            | Error::SolverFailure { .. }
            | Error::NumericFailure(_) => 3,
        }
    }
}
