use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}", fmt_validation(*.line, .message))]
    Validation { line: Option<usize>, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scene packing infeasible: placed {placed} of {requested} objects after {attempts} attempts")]
    Infeasible {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_validation(line: Option<usize>, message: &str) -> String {
    match line {
        Some(line) => format!("line {line}: {message}"),
        None => message.to_string(),
    }
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True for errors caused by the operating system rather than by the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
