//! Command-line harness: JSON configs in, CSV reports and binary solution
//! dumps out.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration error,
//! 3 solver failure, 4 verification failure.

pub mod commands;
pub mod config;
pub mod dump;
pub mod fixtures;
pub mod report;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{execute, Command, Options, Outcome};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad solution dump: {0}")]
    Dump(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Solver(_) => EXIT_SOLVER,
            HarnessError::Io { .. } | HarnessError::Csv(_) | HarnessError::Dump(_) => EXIT_IO,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
