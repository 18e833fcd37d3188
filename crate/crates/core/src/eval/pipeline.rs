use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{RunConfig, StrategyId};
use super::metrics::nmse;
use super::report::{emit_report, EvalResult, FlagCounts, NmseCell, StrategyResult};
use super::EvalError;
use crate::channel::{
    build_dataset, generate_channel_with, make_pilot_observation, ChannelDataset, ChannelMatrix, ChannelSample,
    Environment, ScenarioClass,
};
use crate::diffusion::{estimate_posterior_mean, train_denoiser, DiffusionEstimator};
use crate::gan::{balance_dataset, save_discriminator, train_gan, Discriminator, GanHistory, TrainedGenerator};
use crate::moe::{llm_gate, make_client, random_gate, ExpertRegistry, GateSource, UserState};
use crate::rng::{derive_seed, tag};
use crate::validate::{calibrate, validate_estimate, ValidationReport, ValidatorConfig};

/// Groups of diffusion models; strategies share them where they can.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelSet {
    /// One model on the raw, imbalanced data.
    Generalist,
    /// Registry experts on balanced data, attention off.
    PlainExperts,
    /// Registry experts on balanced data, attention on.
    AttentionExperts,
}

impl ModelSet {
    pub fn of(strategy: StrategyId) -> Self {
        match strategy {
            StrategyId::Hallucination => ModelSet::Generalist,
            StrategyId::NoAttention => ModelSet::PlainExperts,
            StrategyId::NoLlm | StrategyId::Integrated => ModelSet::AttentionExperts,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ModelSet::Generalist => "generalist",
            ModelSet::PlainExperts => "experts-plain",
            ModelSet::AttentionExperts => "experts-attention",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GateKind {
    Single,
    Llm,
    Random,
}

fn gate_kind(strategy: StrategyId) -> GateKind {
    match strategy {
        StrategyId::Hallucination => GateKind::Single,
        StrategyId::NoLlm => GateKind::Random,
        StrategyId::NoAttention | StrategyId::Integrated => GateKind::Llm,
    }
}

/// Diffusion models of one set, in registry order, with their loss curves.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub registry: ExpertRegistry,
    pub models: Vec<DiffusionEstimator>,
    pub losses: Vec<Vec<f64>>,
}

impl TrainedModels {
    /// Mean loss per epoch across the set's models.
    pub fn mean_loss(&self) -> Vec<f64> {
        let epochs = self.losses.iter().map(Vec::len).min().unwrap_or(0);
        (0..epochs)
            .map(|e| self.losses.iter().map(|l| l[e]).sum::<f64>() / self.losses.len() as f64)
            .collect()
    }

    fn model(&self, id: &str) -> Option<&DiffusionEstimator> {
        let k = self.registry.experts().iter().position(|e| e.id == id)?;
        self.models.get(k)
    }
}

/// Data, GAN and validator shared by every strategy of one seed.
pub struct SeedBase {
    pub seed: u64,
    pub dataset: ChannelDataset,
    pub balanced: ChannelDataset,
    pub generator: TrainedGenerator,
    pub discriminator: Discriminator<f32>,
    pub gan_history: GanHistory,
    pub validator: ValidatorConfig,
}

fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join("models").join(format!("seed-{seed}"))
}

fn create_dir(path: &Path) -> Result<(), EvalError> {
    fs::create_dir_all(path).map_err(|e| EvalError::io(path, e))
}

/// Builds the seed's dataset, trains the GAN on its NLoS part, balances the
/// dataset and calibrates the validators. With `save` set the generator,
/// discriminator and validator thresholds are written under the output
/// directory.
pub fn prepare_base(cfg: &RunConfig, seed: u64, save: bool) -> Result<SeedBase, EvalError> {
    let start = Instant::now();
    let dataset = build_dataset(&cfg.dataset, derive_seed(seed, &[tag("dataset")]))?;
    let nlos: Vec<ChannelSample> = dataset
        .samples()
        .iter()
        .filter(|s| s.scenario.environment == Environment::Nlos)
        .cloned()
        .collect();
    let mut gan_cfg = cfg.gan.clone();
    gan_cfg.train.seed = derive_seed(seed, &[tag("gan")]);
    let (generator, discriminator, gan_history) = train_gan(&nlos, &gan_cfg)?;
    let balanced = balance_dataset(&dataset, &generator, derive_seed(seed, &[tag("balance")]))?;

    let classes = ScenarioClass::all();
    let held_out: Vec<ChannelSample> = (0..cfg.validator.calibration_samples)
        .map(|k| {
            let s = derive_seed(seed, &[tag("calibration"), k as u64]);
            generate_channel_with(classes[k % classes.len()], s, &cfg.dataset.multipath)
        })
        .collect();
    let mut validator = calibrate(&discriminator, dataset.samples(), &held_out)?;
    validator.p_lo = cfg.validator.p_lo;
    validator.p_hi = cfg.validator.p_hi;
    validator.magnitude_cap = cfg.validator.magnitude_cap;
    validator.validate()?;

    if save {
        let dir = seed_dir(cfg, seed);
        create_dir(&dir)?;
        generator.save(&dir.join("gan-generator.ckpt"))?;
        save_discriminator(&discriminator, &dir.join("gan-discriminator.ckpt"))?;
        let path = dir.join("validator.json");
        fs::write(&path, validator.to_json()).map_err(|e| EvalError::io(&path, e))?;
    }
    log::info!(
        "seed {seed}: {} samples, balanced to {}, GAN + calibration in {:.1}s",
        dataset.len(),
        balanced.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(SeedBase {
        seed,
        dataset,
        balanced,
        generator,
        discriminator,
        gan_history,
        validator,
    })
}

/// The registry used for expert sets: the configured file or the default four.
pub fn expert_registry(cfg: &RunConfig, seed: u64, set: ModelSet) -> Result<ExpertRegistry, EvalError> {
    let dir = seed_dir(cfg, seed).join(set.key());
    Ok(match (&cfg.registry, set) {
        (_, ModelSet::Generalist) => ExpertRegistry::single("generalist", dir.join("generalist.ckpt")),
        (Some(path), _) => {
            let loaded = ExpertRegistry::load(path)?;
            let experts = loaded
                .experts()
                .iter()
                .map(|e| {
                    let mut e = e.clone();
                    e.checkpoint = dir.join(format!("{}.ckpt", e.id));
                    e
                })
                .collect();
            ExpertRegistry::new(experts)?
        }
        (None, _) => ExpertRegistry::default_four(&dir),
    })
}

/// Trains every model of `set`. Experts see the balanced samples their
/// coverage selects; the generalist sees the raw dataset.
pub fn train_model_set(cfg: &RunConfig, base: &SeedBase, set: ModelSet, save: bool) -> Result<TrainedModels, EvalError> {
    let registry = expert_registry(cfg, base.seed, set)?;
    let mut denoiser = cfg.diffusion.denoiser;
    denoiser.attention = set == ModelSet::AttentionExperts;
    let mut pilots = cfg.diffusion.pilots;
    pilots.spacing = cfg.pilot_spacing;
    let source = match set {
        ModelSet::Generalist => &base.dataset,
        _ => &base.balanced,
    };
    let mut models = Vec::new();
    let mut losses = Vec::new();
    for expert in registry.experts() {
        let start = Instant::now();
        let samples: Vec<ChannelSample> = source
            .samples()
            .iter()
            .filter(|s| expert.coverage.contains(&s.scenario))
            .cloned()
            .collect();
        if samples.is_empty() {
            return Err(EvalError::Config(format!("expert `{}` has no training samples", expert.id)));
        }
        let mut train = cfg.diffusion.train.clone();
        train.seed = derive_seed(base.seed, &[tag("expert"), tag(&expert.id)]);
        let (model, loss) = train_denoiser(
            &expert.id,
            &samples,
            denoiser,
            &train,
            &pilots,
            cfg.diffusion.schedule,
            expert.coverage.iter().copied().collect(),
        )
        .map_err(|e| EvalError::Training {
            context: format!("{} expert `{}`", set.key(), expert.id),
            seed: base.seed,
            source: Box::new(e),
        })?;
        if save {
            if let Some(dir) = expert.checkpoint.parent() {
                create_dir(dir)?;
            }
            model.save(&expert.checkpoint)?;
        }
        log::info!(
            "seed {}: trained {} `{}` on {} samples in {:.1}s, final loss {:.4}",
            base.seed,
            set.key(),
            expert.id,
            samples.len(),
            start.elapsed().as_secs_f64(),
            loss.last().copied().unwrap_or(f64::NAN)
        );
        models.push(model);
        losses.push(loss);
    }
    if save {
        let path = seed_dir(cfg, base.seed).join(set.key()).join("registry.toml");
        registry.save(&path)?;
    }
    Ok(TrainedModels {
        registry,
        models,
        losses,
    })
}

/// One test channel; shared by every strategy and SNR of a seed.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub class: ScenarioClass,
    pub h: ChannelMatrix,
    pub noise_seed: u64,
}

/// `n` test channels cycling through all 12 classes.
pub fn test_set(cfg: &RunConfig, seed: u64) -> Vec<TestCase> {
    let classes = ScenarioClass::all();
    (0..cfg.obs_per_snr)
        .map(|k| {
            let class = classes[k % classes.len()];
            let s = derive_seed(seed, &[tag("test-channel"), k as u64]);
            TestCase {
                class,
                h: generate_channel_with(class, s, &cfg.dataset.multipath).h,
                noise_seed: derive_seed(seed, &[tag("test-noise"), k as u64]),
            }
        })
        .collect()
}

/// Results of one strategy at one SNR for one seed.
#[derive(Debug, Clone, Default)]
pub struct CellOutcome {
    pub nmse: Vec<f64>,
    pub flags: FlagCounts,
    pub reports: Vec<ValidationReport>,
}

/// Per-test-case expert choice of a strategy.
pub fn route(
    cfg: &RunConfig,
    seed: u64,
    strategy: StrategyId,
    models: &TrainedModels,
    tests: &[TestCase],
) -> Result<(Vec<String>, BTreeMap<GateSource, usize>), EvalError> {
    let client = make_client(&cfg.llm, &models.registry);
    let mut sources = BTreeMap::new();
    let mut ids = Vec::with_capacity(tests.len());
    for (k, case) in tests.iter().enumerate() {
        let state = UserState::of_class(case.class);
        let decision = match gate_kind(strategy) {
            GateKind::Single => {
                ids.push(models.registry.experts()[0].id.clone());
                continue;
            }
            GateKind::Llm => llm_gate(&state, &models.registry, client.as_ref(), cfg.llm.timeout_ms)?,
            GateKind::Random => random_gate(&state, &models.registry, derive_seed(seed, &[tag("gate"), k as u64]))?,
        };
        *sources.entry(decision.source).or_insert(0) += 1;
        ids.push(decision.expert_id);
    }
    Ok((ids, sources))
}

/// Estimates every test case at one SNR. A flagged estimate is redrawn once
/// with a derived seed when resampling is on; the second draw is kept either
/// way and the first draw's flags are recorded.
pub fn evaluate_cell(
    cfg: &RunConfig,
    base: &SeedBase,
    models: &TrainedModels,
    expert_ids: &[String],
    tests: &[TestCase],
    snr_index: usize,
) -> Result<CellOutcome, EvalError> {
    let snr = cfg.snr_db[snr_index];
    let mut out = CellOutcome::default();
    for (k, (case, id)) in tests.iter().zip(expert_ids).enumerate() {
        let model = models
            .model(id)
            .ok_or_else(|| EvalError::Config(format!("gate chose unknown expert `{id}`")))?;
        let obs = make_pilot_observation(&case.h, cfg.pilot_spacing, snr, case.noise_seed)?;
        let sample_seed = derive_seed(base.seed, &[tag("estimate"), snr_index as u64, k as u64]);
        let draws = cfg.diffusion.draws;
        let mut est = estimate_posterior_mean(&obs, model, sample_seed, draws)?;
        let first = validate_estimate(&est, case.class, Some(&base.discriminator), &base.validator)?;
        let mut final_passed = first.passed;
        if !first.passed && cfg.validator.resample {
            est = estimate_posterior_mean(&obs, model, derive_seed(sample_seed, &[tag("resample")]), draws)?;
            final_passed = validate_estimate(&est, case.class, Some(&base.discriminator), &base.validator)?.passed;
        }
        out.flags.add(&first, final_passed);
        out.reports.push(first);
        out.nmse.push(nmse(&est, &case.h)?);
    }
    Ok(out)
}

/// Per-seed pieces of one strategy's result.
struct StrategySeed {
    loss: Vec<f64>,
    cells: Vec<Result<CellOutcome, EvalError>>,
}

fn merge(strategy: StrategyId, cfg: &RunConfig, per_seed: &[StrategySeed]) -> (StrategyResult, Vec<String>) {
    let mut failures = Vec::new();
    let mut cells = Vec::new();
    let mut flags = FlagCounts::default();
    for (i, &snr) in cfg.snr_db.iter().enumerate() {
        let mut values = Vec::new();
        let mut seed_means = Vec::new();
        let mut ok = true;
        for (seed, s) in cfg.seeds.iter().zip(per_seed) {
            match &s.cells[i] {
                Ok(c) => {
                    seed_means.push(c.nmse.iter().sum::<f64>() / c.nmse.len() as f64);
                    values.extend_from_slice(&c.nmse);
                    flags.merge(&c.flags);
                }
                Err(e) => {
                    ok = false;
                    failures.push(format!("{strategy} at {snr} dB, seed {seed}: {e}"));
                }
            }
        }
        if ok {
            cells.push(NmseCell {
                snr_db: snr,
                values,
                seed_means,
            });
        }
    }
    let epochs = per_seed.iter().map(|s| s.loss.len()).min().unwrap_or(0);
    let loss = (0..epochs)
        .map(|e| per_seed.iter().map(|s| s.loss[e]).sum::<f64>() / per_seed.len() as f64)
        .collect();
    (
        StrategyResult {
            strategy,
            seeds: cfg.seeds.clone(),
            loss,
            cells,
            flags,
        },
        failures,
    )
}

/// Runs the configured strategies over every seed and SNR without writing
/// files. Cells that fail are listed in [`EvalError::Partial`] together with
/// everything that completed.
pub fn evaluate(cfg: &RunConfig, save_models: bool) -> Result<EvalResult, EvalError> {
    cfg.validate()?;
    let strategies: Vec<StrategyId> = StrategyId::ALL
        .into_iter()
        .filter(|s| cfg.strategies.contains(s))
        .collect();
    let mut per_strategy: BTreeMap<StrategyId, Vec<StrategySeed>> = BTreeMap::new();
    let fail_all = |e: &EvalError| -> Vec<Result<CellOutcome, EvalError>> {
        cfg.snr_db.iter().map(|_| Err(EvalError::Upstream(e.to_string()))).collect()
    };
    for &seed in &cfg.seeds {
        let base = match prepare_base(cfg, seed, save_models) {
            Ok(b) => Some(b),
            Err(e) => {
                for &s in &strategies {
                    per_strategy.entry(s).or_default().push(StrategySeed {
                        loss: Vec::new(),
                        cells: fail_all(&e),
                    });
                }
                None
            }
        };
        let Some(base) = base else { continue };
        let tests = test_set(cfg, seed);
        let mut sets: BTreeMap<ModelSet, Result<TrainedModels, EvalError>> = BTreeMap::new();
        for &strategy in &strategies {
            let set = ModelSet::of(strategy);
            let models = sets
                .entry(set)
                .or_insert_with(|| train_model_set(cfg, &base, set, save_models));
            let entry = match models {
                Err(e) => StrategySeed {
                    loss: Vec::new(),
                    cells: fail_all(e),
                },
                Ok(models) => {
                    let start = Instant::now();
                    let cells = match route(cfg, seed, strategy, models, &tests) {
                        Err(e) => fail_all(&e),
                        Ok((ids, sources)) => {
                            if !sources.is_empty() {
                                log::info!("seed {seed}: {strategy} gate sources {sources:?}");
                            }
                            (0..cfg.snr_db.len())
                                .map(|i| evaluate_cell(cfg, &base, models, &ids, &tests, i))
                                .collect()
                        }
                    };
                    log::info!("seed {seed}: evaluated {strategy} in {:.1}s", start.elapsed().as_secs_f64());
                    StrategySeed {
                        loss: models.mean_loss(),
                        cells,
                    }
                }
            };
            per_strategy.entry(strategy).or_default().push(entry);
        }
    }
    let mut result = EvalResult::default();
    let mut failures = Vec::new();
    for (strategy, seeds) in per_strategy {
        let (r, f) = merge(strategy, cfg, &seeds);
        result.strategies.push(r);
        failures.extend(f);
    }
    if failures.is_empty() {
        Ok(result)
    } else {
        Err(EvalError::Partial {
            completed: Box::new(result),
            failures,
        })
    }
}

/// One strategy over every seed and SNR.
pub fn run_strategy(strategy: StrategyId, cfg: &RunConfig) -> Result<StrategyResult, EvalError> {
    let single = RunConfig {
        strategies: vec![strategy],
        ..cfg.clone()
    };
    let mut result = evaluate(&single, false)?;
    Ok(result.strategies.remove(0))
}

/// Full grid: evaluates, saves models and writes the report into
/// `cfg.out_dir`. A partial result is still written before the error is
/// returned.
pub fn sweep(cfg: &RunConfig) -> Result<EvalResult, EvalError> {
    match evaluate(cfg, true) {
        Ok(result) => {
            emit_report(&result, &cfg.out_dir)?;
            Ok(result)
        }
        Err(EvalError::Partial { completed, failures }) => {
            emit_report(&completed, &cfg.out_dir)?;
            Err(EvalError::Partial { completed, failures })
        }
        Err(e) => Err(e),
    }
}
