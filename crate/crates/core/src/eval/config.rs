use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::channel::GenerationConfig;
use crate::diffusion::{DenoiserConfig, PilotTraining, ScheduleParams};
use crate::gan::GanConfig;
use crate::moe::LlmConfig;
use crate::nn::TrainConfig;

/// The four evaluated pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyId {
    /// One attention-free model on the raw imbalanced data, no gate.
    Hallucination,
    /// GAN-balanced experts and the language-model gate, attention off.
    NoAttention,
    /// GAN-balanced attention experts picked at random.
    NoLlm,
    /// GAN-balanced attention experts and the language-model gate.
    Integrated,
}

impl StrategyId {
    pub const ALL: [StrategyId; 4] = [
        StrategyId::Hallucination,
        StrategyId::NoAttention,
        StrategyId::NoLlm,
        StrategyId::Integrated,
    ];

    pub fn key(self) -> &'static str {
        match self {
            StrategyId::Hallucination => "HALLUCINATION",
            StrategyId::NoAttention => "NO_ATTENTION",
            StrategyId::NoLlm => "NO_LLM",
            StrategyId::Integrated => "INTEGRATED",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for StrategyId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        StrategyId::ALL
            .into_iter()
            .find(|k| k.key() == norm)
            .ok_or_else(|| EvalError::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionSection {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleParams,
    pub train: TrainConfig,
    pub pilots: PilotTraining,
    /// Ancestral draws averaged into each estimate; 1 keeps single posterior samples.
    pub draws: usize,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            denoiser: DenoiserConfig {
                channels: 8,
                ..DenoiserConfig::default()
            },
            schedule: ScheduleParams::default(),
            train: TrainConfig {
                learning_rate: 4e-3,
                batch_size: 16,
                epochs: 15,
                ..TrainConfig::default()
            },
            pilots: PilotTraining::default(),
            draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorSection {
    pub p_lo: f64,
    pub p_hi: f64,
    pub magnitude_cap: f64,
    /// Held-out real samples used to calibrate the realism threshold.
    pub calibration_samples: usize,
    /// Draw a second estimate when the first one is flagged.
    pub resample: bool,
}

impl Default for ValidatorSection {
    fn default() -> Self {
        Self {
            p_lo: 0.25,
            p_hi: 4.0,
            magnitude_cap: 10.0,
            calibration_samples: 600,
            resample: true,
        }
    }
}

/// Everything a sweep needs. Loaded from TOML; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub snr_db: Vec<f64>,
    pub strategies: Vec<StrategyId>,
    /// Test observations per (strategy, SNR, seed).
    pub obs_per_snr: usize,
    pub pilot_spacing: usize,
    pub out_dir: PathBuf,
    /// Optional expert registry file; the built-in four experts otherwise.
    pub registry: Option<PathBuf>,
    pub dataset: GenerationConfig,
    pub diffusion: DiffusionSection,
    pub gan: GanConfig,
    pub llm: LlmConfig,
    pub validator: ValidatorSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut gan = GanConfig::default();
        gan.train.epochs = 60;
        Self {
            seeds: vec![0, 1, 2],
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            strategies: StrategyId::ALL.to_vec(),
            obs_per_snr: 200,
            pilot_spacing: 4,
            out_dir: PathBuf::from("runs/default"),
            registry: None,
            dataset: GenerationConfig::with_total(2500, 1, 4),
            diffusion: DiffusionSection::default(),
            gan,
            llm: LlmConfig::default(),
            validator: ValidatorSection::default(),
        }
    }
}

impl RunConfig {
    /// A configuration small enough for tests: a couple of minutes on one core.
    pub fn smoke() -> Self {
        let mut cfg = Self::default();
        cfg.seeds = vec![0];
        cfg.snr_db = vec![-10.0, 0.0, 20.0];
        cfg.obs_per_snr = 12;
        cfg.dataset = GenerationConfig::with_total(1400, 1, 4);
        cfg.diffusion.denoiser.channels = 4;
        cfg.diffusion.denoiser.res_blocks = 1;
        cfg.diffusion.schedule.steps = 20;
        cfg.diffusion.schedule.beta_end = 0.4;
        cfg.diffusion.train.epochs = 2;
        cfg.gan.channels = 4;
        cfg.gan.train.epochs = 1;
        cfg.validator.calibration_samples = 120;
        cfg
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected".into());
        }
        if self.obs_per_snr == 0 {
            return bad("obs_per_snr must be positive".into());
        }
        if self.validator.calibration_samples == 0 {
            return bad("validator.calibration_samples must be positive".into());
        }
        if let Some(path) = &self.registry {
            if !path.exists() {
                return bad(format!("registry file {} does not exist", path.display()));
            }
        }
        if self.diffusion.draws == 0 {
            return Err(EvalError::Config("diffusion.draws must be at least 1".into()));
        }
        self.diffusion.denoiser.validate()?;
        self.gan.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        if let Some(reg) = &cfg.registry {
            if reg.is_relative() {
                cfg.registry = Some(path.parent().unwrap_or(Path::new("")).join(reg));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_toml()).map_err(|e| EvalError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_keys_round_trip() {
        for s in StrategyId::ALL {
            assert_eq!(s.key().parse::<StrategyId>().unwrap(), s);
        }
        assert_eq!("no-llm".parse::<StrategyId>().unwrap(), StrategyId::NoLlm);
        assert!("oracle".parse::<StrategyId>().is_err());
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = RunConfig::from_toml("seeds = [7]\nstrategies = [\"INTEGRATED\"]\n[llm]\nendpoint = \"\"\n").unwrap();
        assert_eq!(partial.seeds, vec![7]);
        assert_eq!(partial.strategies, vec![StrategyId::Integrated]);
        assert_eq!(partial.obs_per_snr, 200);
        assert!(cfg.validate().is_ok());
        assert!(RunConfig::smoke().validate().is_ok());
    }

    #[test]
    fn partial_tables_take_their_own_defaults() {
        let text = "seeds = [0, 1, 2]\nstrategies = [\"INTEGRATED\", \"HALLUCINATION\"]\n\
                    [dataset]\ntotal = 2500\n[diffusion]\ndraws = 1\n[diffusion.train]\nepochs = 15\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        let defaults = RunConfig::default();
        assert_eq!(cfg.dataset, defaults.dataset);
        assert_eq!(cfg.diffusion.denoiser, defaults.diffusion.denoiser);
        assert_eq!(cfg.diffusion.train.epochs, 15);
        assert_eq!(cfg.diffusion.train.learning_rate, TrainConfig::default().learning_rate);
        assert_ne!(cfg.diffusion.train.learning_rate, defaults.diffusion.train.learning_rate);
    }

    #[test]
    fn load_rejects_invalid_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seeds = []\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(EvalError::Config(_))));
    }

    #[test]
    fn invalid_configs() {
        let mut c = RunConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let c = RunConfig {
            registry: Some(PathBuf::from("/nonexistent/registry.toml")),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            snr_db: vec![f64::NAN],
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
