use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data does not match the expected schema.
    #[error("schema error at row {row}, column `{column}`: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    /// A structural or configuration constraint was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine failed to converge.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// A function evaluation produced a non-finite value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The data cannot support the requested model (e.g. no events).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
