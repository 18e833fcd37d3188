//! Conditional DDPM channel estimation.

pub mod denoiser;
pub mod estimator;
pub mod schedule;

pub use denoiser::{Denoiser, DenoiserConfig};
pub use estimator::{estimate_channel, estimate_posterior_mean, sampling_seed, train_denoiser, DiffusionEstimator, PilotTraining, DATA_SCALE};
pub use schedule::{make_schedule, q_sample, q_sample_with, NoiseSchedule, ScheduleParams};

use crate::channel::PilotError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged in epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<DiffusionEstimator>,
    },
    #[error("bad observation: {0}")]
    Observation(String),
    #[error(transparent)]
    Pilot(#[from] PilotError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
