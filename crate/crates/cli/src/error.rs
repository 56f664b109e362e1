use std::fmt::Display;

use thiserror::Error;

/// A failed command. The variant decides the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys, or input files: exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The computation itself failed: exit status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
