//! Error type of the command-line front end and its exit codes.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("missing artifact {0}; run `ctxboot fit` first")]
    MissingArtifacts(PathBuf),
    #[error(transparent)]
    Domain(ctxboot::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 2 for configuration, 3 for I/O, 4 for domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } | Self::MissingArtifacts(_) => 3,
            Self::Domain(_) => 4,
        }
    }
}

impl From<ctxboot::Error> for CliError {
    fn from(e: ctxboot::Error) -> Self {
        use ctxboot::Error as E;
        match e {
            E::BadConfidence(_) | E::BadConstant(_) | E::Config(_) | E::InvalidAlphabet(_) => {
                Self::Config(e.to_string())
            }
            other => Self::Domain(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
