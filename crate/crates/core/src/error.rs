use thiserror::Error;

/// Errors raised across the toolkit. Each variant maps onto a distinct CLI
/// exit code (see [`Error::exit_code`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("criterion not applicable: {0}")]
    Inapplicable(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub fn ingestion(line: usize, msg: impl Into<String>) -> Self {
        Error::Ingestion {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code for the CLI. Usage errors (2) are produced by clap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Inapplicable(_) => 3,
            Error::Resource(_) => 4,
            Error::Ingestion { .. } => 5,
            Error::Infeasible(_) => 6,
            Error::Io(_) => 7,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
