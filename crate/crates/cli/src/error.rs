use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration. Exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// The environment let the run down: unreachable services, unwritable
    /// output. Exit status 3.
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ensgate_core::Error> for CliError {
    fn from(e: ensgate_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Process exit status for a run.
pub fn exit_status(code: u8) -> ExitCode {
    ExitCode::from(code)
}
