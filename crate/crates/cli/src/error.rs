use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Anything wrong with the config file or command-line overrides.
    #[error("config {path}: {source}")]
    Config {
        path: PathBuf,
        source: zps_core::Error,
    },

    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: zps_core::Error,
    },

    #[error("invalid seed: {0}")]
    Seed(String),

    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error(transparent)]
    Core(#[from] zps_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. }
            | CliError::Input { .. }
            | CliError::Seed(_)
            | CliError::Output { .. } => 2,
            CliError::NotConverged { .. } => 1,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}
