//! Experiment runner: configs in, audited curves and summaries out.

pub mod config;
pub mod format;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::env::EnvError;
use crate::gate::{GateError, StepError};
use crate::metrics::MetricsError;
use crate::policy::PolicyError;

pub use config::{Algorithm, ExperimentConfig, Setting};
pub use runner::{compare, run_experiment, simulate, Comparison, EnvInstance, Execution, ExperimentResult, RunOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error("config {0} describes a different environment than config 0")]
    MismatchedEnvironments(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
