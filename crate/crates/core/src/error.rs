use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (index out of range,
    /// shape mismatch, unsupported argument).
    #[error("usage error: {0}")]
    Usage(String),

    /// The deck could not be parsed or failed validation.
    #[error("deck error at line {line}, key `{key}`: {message}")]
    Deck {
        key: String,
        line: usize,
        message: String,
    },

    /// A particle moved more than one cell along some axis in one step.
    #[error("CFL violation: {0}")]
    Cfl(String),

    /// A user hook returned an error; the run is aborted.
    #[error("hook `{name}` failed at step {step}: {message}")]
    Hook {
        name: String,
        step: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn deck(key: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Deck {
            key: key.into(),
            line,
            message: message.into(),
        }
    }
}
