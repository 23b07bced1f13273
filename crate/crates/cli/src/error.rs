use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] jsam::Error),

    #[error("cannot read {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("cannot serialise configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
}

impl CliError {
    /// Invalid configuration value, reported under `field`.
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CliError::Core(jsam::Error::config(field, reason))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
