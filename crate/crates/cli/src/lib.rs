//! Batch runner behind the `conserv` binary: configuration, trace files and
//! the `run`, `verify` and `compare` commands.

pub mod commands;
pub mod config;
pub mod trace;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{compare, run, verify};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] conserv_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// The run ended without reaching the tolerance.
    #[error("no convergence: {0}")]
    NotConverged(String),

    /// The run converged but a certificate or oracle check did not pass.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use conserv_core::Error as E;
        match self {
            CliError::NotConverged(_) | CliError::CheckFailed(_) => 2,
            CliError::Core(E::Diverged { .. } | E::NotFixedPoint { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
