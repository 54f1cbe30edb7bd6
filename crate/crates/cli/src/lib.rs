//! Command-line front end: configuration files, analyses and CSV output.

pub mod args;
pub mod config;
mod run;

use thiserror::Error;

pub use args::Cli;
pub use run::run;

/// Process exit codes.
pub mod exit {
    pub const USAGE: u8 = 1;
    pub const INVALID: u8 = 2;
    pub const NO_CONVERGENCE: u8 = 3;
    pub const IO: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] config::LoadError),
    #[error(transparent)]
    Analysis(#[from] twoswitch_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use twoswitch_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(config::LoadError::Io { .. }) => exit::IO,
            CliError::Config(_) => exit::INVALID,
            CliError::Analysis(E::InvalidParameter { .. } | E::Domain(_)) => exit::INVALID,
            CliError::Analysis(_) => exit::NO_CONVERGENCE,
            CliError::Io { .. } => exit::IO,
        }
    }
}
