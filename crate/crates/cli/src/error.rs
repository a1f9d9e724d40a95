use std::fmt;
use std::path::PathBuf;

use crate::config::ConfigError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    MissingFile(String),
    Invalid(String),
    Incompatible(String),
    Diverged(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Incompatible(_) => 4,
            CliError::Diverged(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingFile(_) => "missing_file",
            CliError::Invalid(_) => "validation",
            CliError::Incompatible(_) => "incompatible_checkpoint",
            CliError::Diverged(_) => "divergence",
            CliError::Other(_) => "internal",
        }
    }

    pub fn missing(path: impl Into<PathBuf>) -> Self {
        CliError::MissingFile(format!("file not found: {}", path.into().display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissingFile(m)
            | CliError::Invalid(m) | CliError::Incompatible(m) | CliError::Diverged(m) | CliError::Other(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<graphrec::Error> for CliError {
    fn from(e: graphrec::Error) -> Self {
        use graphrec::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::MissingFile(msg),
            E::Parse { .. }
            | E::Validation { .. }
            | E::Domain { .. }
            | E::Index { .. }
            | E::Config(_)
            | E::TooSmall(_)
            | E::Json(_) => CliError::Invalid(msg),
            E::Incompatible(_) => CliError::Incompatible(msg),
            E::Divergence { .. } => CliError::Diverged(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
