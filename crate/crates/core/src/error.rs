use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the market simulator and its experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's domain (bad index, invalid simplex, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An operation was called in the wrong agent state.
    #[error("invalid state: {0}")]
    State(String),

    /// A configuration value failed validation; `key` names the offending entry.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("failed to parse config file {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
