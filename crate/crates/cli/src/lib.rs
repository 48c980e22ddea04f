//! Library half of the command-line harness: synthetic generators,
//! experiment drivers, verification oracles, and the point schemas used by
//! the hull and cut subcommands.

pub mod config;
pub mod experiments;
pub mod gen;
pub mod io;
pub mod oracle;

/// Harness-level errors, mapped to process exit codes by the binary:
/// validation and IO problems exit with 2, solver failures with 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}
