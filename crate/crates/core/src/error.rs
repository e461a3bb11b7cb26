use thiserror::Error;

/// Errors raised anywhere in the evacuation pipeline.
///
/// The variants map onto the CLI exit codes and HTTP status classes:
/// `Validation`, `DuplicateId`, `Lookup` and `Precondition` are input
/// problems, `Parse` and `Io` are transport problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {message}")]
    Validation { message: String, field: Option<String> },
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("unknown id: {0}")]
    Lookup(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            message: message.into(),
            field: None,
        }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            message: message.into(),
            field: Some(field.into()),
        }
    }

    /// True for problems with the caller's input rather than the transport.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Parse(_) | Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        match e.classify() {
            serde_json::error::Category::Io => Error::Io(e.into()),
            _ => Error::Parse(e.to_string()),
        }
    }
}
