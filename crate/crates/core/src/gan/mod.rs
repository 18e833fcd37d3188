//! Conditional GAN for synthesising minority-class (NLoS) channels.

pub mod model;
pub mod synth;
pub mod train;

pub use model::{condition_vector, Discriminator, Generator, COND_DIM};
pub use synth::{
    balance_dataset, load_discriminator, realism_score, realism_score_of, save_discriminator, synthesize_nlos,
};
pub use train::{batch_diversity, train_gan, GanHistory, TrainedGenerator};

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioClass;
use crate::nn::TrainConfig;

pub const MIN_NLOS_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub channels: usize,
    pub train: TrainConfig,
    pub wasserstein: bool,
    pub weight_clip: f64,
    pub diversity_batch: usize,
    pub diversity_threshold: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            channels: 16,
            train: TrainConfig {
                learning_rate: 5e-4,
                batch_size: 16,
                epochs: 30,
                seed: 0,
                beta1: 0.5,
                beta2: 0.999,
            },
            wasserstein: false,
            weight_clip: 0.01,
            diversity_batch: 16,
            diversity_threshold: 0.5,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.latent_dim == 0 || self.channels == 0 {
            return Err(GanError::Config("latent_dim and channels must be positive".into()));
        }
        self.train.validate().map_err(|e| GanError::Config(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least {min} NLoS samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("{0} is not an NLoS class")]
    WrongEnvironment(ScenarioClass),
    #[error("generator was not trained on {0}")]
    ScenarioMismatch(ScenarioClass),
    #[error("non-finite {network} loss {value} in epoch {epoch}")]
    NonFinite {
        epoch: usize,
        network: &'static str,
        value: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
