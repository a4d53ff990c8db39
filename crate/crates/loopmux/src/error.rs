//! Crate-wide error type and exit-code mapping for the CLI.

use std::path::PathBuf;

/// Errors produced by the model, the simulator, and the CLI front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation was called with an out-of-domain argument.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A config file parsed but failed semantic validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A config file could not be read.
    #[error("cannot read config file {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A config file is not valid TOML or has unknown keys.
    #[error("cannot parse config: {0}")]
    ConfigParse(#[from] toml::de::Error),

    /// Tallies from incompatible runs cannot be combined.
    #[error("tallies cannot be merged: {0}")]
    MergeMismatch(String),

    /// I/O failure outside config reading (e.g. writing output).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error: 2 config parse/read, 3 validation,
    /// 4 anything at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigIo { .. } | Error::ConfigParse(_) => 2,
            Error::InvalidConfig(_) | Error::InvalidParam(_) => 3,
            Error::MergeMismatch(_) | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
