use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke a precondition of an operation.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed input file.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid experiment or scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("external trainer: {0}")]
    Bridge(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
