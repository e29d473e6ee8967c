use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes between tensors, layers or masks.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A model, run or experiment configuration that cannot be executed.
    #[error("configuration error: {0}")]
    Config(String),

    /// Config text that failed to parse or validate.
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("graph generation failed after {draws} draws: {message}")]
    Generation { draws: usize, message: String },

    /// Malformed or tampered mask frame.
    #[error("protocol error{}: {message}", segment.map(|s| format!(" in segment {s}")).unwrap_or_default())]
    Protocol {
        segment: Option<usize>,
        message: String,
    },

    /// A violated synchronous-round contract.
    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("input error in {}{}: {message}", file.display(), offset.map(|o| format!(" at byte offset {o}")).unwrap_or_default())]
    Input {
        file: PathBuf,
        offset: Option<u64>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn protocol(segment: Option<usize>, message: impl Into<String>) -> Self {
        Error::Protocol {
            segment,
            message: message.into(),
        }
    }

    /// Errors caused by the user's configuration rather than by execution.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ConfigLine { .. })
    }
}
