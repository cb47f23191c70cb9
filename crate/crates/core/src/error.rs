use thiserror::Error;

/// Errors produced anywhere in the abstraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("noise structure violation in component {component}: {message}")]
    Structure { component: usize, message: String },

    #[error("evaluation error in component {component}: {message}")]
    Eval { component: usize, message: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("internal soundness violation: {0}")]
    Soundness(String),

    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Wraps the error with the name of the pipeline phase that produced it.
    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// True when the error signals a bug in the abstraction rather than bad input.
    pub fn is_soundness(&self) -> bool {
        match self {
            Error::Soundness(_) => true,
            Error::Phase { source, .. } => source.is_soundness(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
