//! Library side of the `bvx` command: config parsing, width sweeps, linear
//! oracle validation and result reporting. `main.rs` is a thin clap wrapper.

pub mod config;
pub mod oracle;
pub mod report;
pub mod rows;
pub mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("member divergence: {0}")]
    Divergence(String),
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] bvx_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bvx_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Parse { .. } => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Divergence(_) => EXIT_DIVERGENCE,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::Config(_) | E::Format { .. } | E::Unsupported(_) | E::Dimension(_) => EXIT_CONFIG,
                E::Divergence { .. } | E::Ensemble(_) | E::Tuning { .. } | E::Convergence { .. } => {
                    EXIT_DIVERGENCE
                }
                _ => 1,
            },
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
