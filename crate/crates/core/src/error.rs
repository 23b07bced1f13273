use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is out of range; `field` names it.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A cost distribution violates the regularity condition or has an invalid support.
    #[error("invalid cost distribution: {0}")]
    Distribution(String),

    /// The brute-force oracle refuses instances that are too large.
    #[error("instance too large for brute force: {0}")]
    Guard(String),

    #[error("data partition failed: {0}")]
    Partition(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
