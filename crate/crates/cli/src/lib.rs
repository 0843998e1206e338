//! File-level front end of the driftnet simulation: configuration loading,
//! site data generation, run persistence and report export.

use std::io;
use std::path::PathBuf;

use driftnet_core::SimError;
use thiserror::Error;

pub mod config;
pub mod io_util;
pub mod report;
pub mod run;

pub use config::{load_config, parse_schemes, Overrides};
pub use report::{cmd_report, recompute_summary};
pub use run::{cmd_datagen, cmd_run, RunManifest, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: invalid configuration at {field}: {message}", path.display())]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("missing inputs in {}: expected {}", dir.display(), missing.join(", "))]
    MissingInputs { dir: PathBuf, missing: Vec<String> },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
        CliError::Data {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
