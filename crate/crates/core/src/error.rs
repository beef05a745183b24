use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("selected design is rank deficient")]
    SingularDesign,

    #[error("IRLS did not converge after {iterations} iterations (last deviance {last_deviance})")]
    Convergence { iterations: usize, last_deviance: f64 },

    #[error("invalid state: {0}")]
    State(String),

    #[error("unsupported acceptance variant: {0}")]
    UnsupportedVariant(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
