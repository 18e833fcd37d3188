//! Experiment orchestration: NMSE metrics, the four strategies, SNR sweeps
//! and report files.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use config::{DiffusionSection, RunConfig, StrategyId, ValidatorSection};
pub use metrics::{ls_baseline_nmse, mean_std, nmse, to_db};
pub use pipeline::{
    evaluate, evaluate_cell, expert_registry, prepare_base, route, run_strategy, sweep, test_set, train_model_set,
    CellOutcome, ModelSet, SeedBase, TestCase, TrainedModels,
};
pub use report::{emit_report, EvalResult, FlagCounts, NmseCell, StrategyResult, RESULT_FILE};

use std::path::{Path, PathBuf};

use crate::channel::{DatasetError, PilotError};
use crate::diffusion::DiffusionError;
use crate::gan::GanError;
use crate::moe::GateError;
use crate::validate::ValidateError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("reference channel has zero power")]
    ZeroReference,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("training failed for {context} (seed {seed}): {source}")]
    Training {
        context: String,
        seed: u64,
        #[source]
        source: Box<DiffusionError>,
    },
    #[error("earlier step failed: {0}")]
    Upstream(String),
    #[error("{} cells failed: {}", failures.len(), failures.join("; "))]
    Partial {
        completed: Box<EvalResult>,
        failures: Vec<String>,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}

impl EvalError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
