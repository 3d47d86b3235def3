use std::fmt;
use std::path::Path;

/// Failure classes with stable exit codes: 1 for the environment (files,
/// models, I/O), 2 for invalid user input.
#[derive(Debug)]
pub enum CliError {
    Environment(String),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Environment(_) => 1,
            CliError::Usage(_) => 2,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn env(msg: impl fmt::Display) -> Self {
        CliError::Environment(msg.to_string())
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Environment(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Environment(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
