use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserConfig, IN_CHANNELS};
use super::schedule::{q_sample, NoiseSchedule, ScheduleParams};
use super::DiffusionError;
use crate::channel::{interpolate_pilots, make_pilot_observation, ChannelMatrix, ChannelSample, PilotObservation, ScenarioClass, GRID_LEN, N_ANT, N_SC};
use crate::nn::{Adam, Checkpoint, Module, Tensor, TrainConfig};
use crate::rng::{self, derive_seed, derived_rng, tag};

/// Unit-power complex entries have unit-variance real planes after this scaling.
pub const DATA_SCALE: f32 = std::f32::consts::SQRT_2;
/// Bound on the intermediate `x0` estimate (in scaled units) during sampling.
const X0_CLIP: f32 = 5.0;
const PLANE: usize = 2 * GRID_LEN;

/// How training observations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotTraining {
    pub spacing: usize,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
}

impl Default for PilotTraining {
    fn default() -> Self {
        Self {
            spacing: 4,
            snr_db_min: -12.0,
            snr_db_max: 25.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionEstimator {
    pub id: String,
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser<f32>,
    pub coverage: Vec<ScenarioClass>,
    pub data_consistency: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct EstimatorMeta {
    kind: String,
    id: String,
    schedule: ScheduleParams,
    denoiser: DenoiserConfig,
    coverage: Vec<ScenarioClass>,
    data_consistency: bool,
    data_scale: f32,
}

const META_KIND: &str = "diffusion-estimator";

impl DiffusionEstimator {
    pub fn new(
        id: impl Into<String>,
        schedule: NoiseSchedule,
        cfg: DenoiserConfig,
        coverage: Vec<ScenarioClass>,
        seed: u64,
    ) -> Result<Self, DiffusionError> {
        let mut rng = derived_rng(seed, &[tag("denoiser-init")]);
        Ok(Self {
            id: id.into(),
            schedule,
            denoiser: Denoiser::new(cfg, &mut rng)?,
            coverage,
            data_consistency: true,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = EstimatorMeta {
            kind: META_KIND.into(),
            id: self.id.clone(),
            schedule: self.schedule.params(),
            denoiser: self.denoiser.config(),
            coverage: self.coverage.clone(),
            data_consistency: self.data_consistency,
            data_scale: DATA_SCALE,
        };
        Checkpoint::from_module(&self.denoiser, serde_json::to_string(&meta).expect("metadata serialises"))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DiffusionError> {
        let meta: EstimatorMeta =
            serde_json::from_str(&ck.metadata).map_err(|e| DiffusionError::Checkpoint(format!("metadata: {e}")))?;
        if meta.kind != META_KIND {
            return Err(DiffusionError::Checkpoint(format!("not an estimator checkpoint ({})", meta.kind)));
        }
        if meta.data_scale != DATA_SCALE {
            return Err(DiffusionError::Checkpoint(format!("data scale {} unsupported", meta.data_scale)));
        }
        let schedule = NoiseSchedule::new(meta.schedule)?;
        let mut est = Self::new(meta.id, schedule, meta.denoiser, meta.coverage, 0)?;
        est.data_consistency = meta.data_consistency;
        ck.load_into(&mut est.denoiser)
            .map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        Ok(est)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        self.checkpoint()
            .save(path)
            .map_err(|e| DiffusionError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let ck = Checkpoint::load(path).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

/// Observation-derived input planes: pilot mask, `y` (re, im), the
/// delay-domain interpolation of the pilots (re, im) and a constant
/// reliability plane `1 / (1 + sigma2)`. Channel planes are in scaled units.
fn conditioning(obs: &PilotObservation) -> Vec<f32> {
    let mut planes = Vec::with_capacity((IN_CHANNELS - 2) * GRID_LEN);
    planes.extend(obs.mask.as_slice().iter().map(|&b| if b { 1.0f32 } else { 0.0 }));
    planes.extend(scaled_planes(&obs.y));
    planes.extend(scaled_planes(&interpolate_pilots(obs)));
    let reliability = (1.0 / (1.0 + obs.sigma2)) as f32;
    planes.extend(std::iter::repeat_n(reliability, GRID_LEN));
    planes
}

fn build_input(xt: &[f32], cond: &[f32]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(IN_CHANNELS * GRID_LEN);
    data.extend_from_slice(xt);
    data.extend_from_slice(cond);
    Tensor::from_vec(&[IN_CHANNELS, N_ANT, N_SC], data).unwrap()
}

fn scaled_planes(h: &ChannelMatrix) -> Vec<f32> {
    h.to_planes().into_iter().map(|v| v * DATA_SCALE).collect()
}

/// The network predicts a residual on top of `sqrt(1 - alpha_bar_t) * x_t`,
/// which is `E[eps | x_t]` for unit-variance data with no other information.
/// Without it every error in the predicted noise is amplified by
/// `sqrt((1 - alpha_bar_t) / alpha_bar_t)` in the `x0` estimate, and the
/// network spends its capacity relearning the identity at large `t`.
fn prior_skip(schedule: &NoiseSchedule, t: usize) -> f32 {
    (1.0 - schedule.alpha_bar(t)).sqrt() as f32
}

fn standard_normal(rng: &mut rng::Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Trains an epsilon-predicting denoiser on `samples`.
///
/// Each example draws a step `t`, noise, and a fresh pilot observation at an
/// SNR uniform in the configured range. Returns the per-epoch mean loss.
pub fn train_denoiser(
    id: &str,
    samples: &[ChannelSample],
    cfg: DenoiserConfig,
    train: &TrainConfig,
    pilots: &PilotTraining,
    schedule: ScheduleParams,
    coverage: Vec<ScenarioClass>,
) -> Result<(DiffusionEstimator, Vec<f64>), DiffusionError> {
    train.validate().map_err(|e| DiffusionError::Config(e.to_string()))?;
    if samples.is_empty() {
        return Err(DiffusionError::Config("no training samples".into()));
    }
    if !(pilots.snr_db_min <= pilots.snr_db_max) {
        return Err(DiffusionError::Config("empty training SNR range".into()));
    }
    let schedule = NoiseSchedule::new(schedule)?;
    let mut est = DiffusionEstimator::new(id, schedule, cfg, coverage, train.seed)?;
    let mut opt = Adam::from_config(train);
    let mut losses = Vec::with_capacity(train.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let steps = est.schedule.steps();

    for epoch in 0..train.epochs {
        let last_good = est.clone();
        let mut rng = derived_rng(train.seed, &[tag("diffusion-epoch"), epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch in order.chunks(train.batch_size) {
            est.denoiser.zero_grad();
            for &i in batch {
                let h = &samples[i].h;
                let t = rng.random_range(1..=steps);
                let snr = rng.random_range(pilots.snr_db_min..=pilots.snr_db_max);
                let obs = make_pilot_observation(h, pilots.spacing, snr, rng.random())?;
                let eps = standard_normal(&mut rng, PLANE);
                let xt = q_sample(&scaled_planes(h), t, &eps, &est.schedule)?;
                let input = build_input(&xt, &conditioning(&obs));
                let mut out = est.denoiser.forward(&input, t);
                let skip = prior_skip(&est.schedule, t);
                out.data_mut().iter_mut().zip(&xt).for_each(|(o, x)| *o += skip * x);
                let n = PLANE as f32;
                let scale = 2.0 / (n * batch.len() as f32);
                let mut loss = 0.0f64;
                let grad: Vec<f32> = out
                    .data()
                    .iter()
                    .zip(&eps)
                    .map(|(o, e)| {
                        let d = o - e;
                        loss += (d * d) as f64;
                        d * scale
                    })
                    .collect();
                let loss = loss / n as f64;
                if !loss.is_finite() {
                    return Err(DiffusionError::Diverged {
                        epoch,
                        last_good: Box::new(last_good),
                    });
                }
                total += loss;
                est.denoiser
                    .backward(&Tensor::from_vec(out.shape(), grad).unwrap());
            }
            opt.step(&mut est.denoiser);
        }
        let mean = total / samples.len() as f64;
        log::debug!("{id}: epoch {epoch} loss {mean:.5}");
        losses.push(mean);
    }
    Ok((est, losses))
}

/// Ancestral DDPM sampling conditioned on a pilot observation.
///
/// With data consistency on, the pilot entries of every intermediate `x0`
/// estimate are pulled towards `y` with weight
/// `(1 - alpha_bar_t) / ((1 - alpha_bar_t) + sigma2)`.
pub fn estimate_channel(
    obs: &PilotObservation,
    model: &DiffusionEstimator,
    seed: u64,
) -> Result<ChannelMatrix, DiffusionError> {
    if !(obs.sigma2.is_finite() && obs.sigma2 >= 0.0) || !obs.y.is_finite() {
        return Err(DiffusionError::Observation("non-finite observation".into()));
    }
    let schedule = &model.schedule;
    let mut denoiser = model.denoiser.clone();
    let mut rng = derived_rng(seed, &[tag("ddpm-sample")]);
    let y = scaled_planes(&obs.y);
    let cond = conditioning(obs);
    let pilot: Vec<bool> = obs.mask.as_slice().iter().chain(obs.mask.as_slice()).copied().collect();
    // sigma2 is per complex entry; each scaled real component carries sigma2.
    let noise_var = obs.sigma2;

    let mut x = standard_normal(&mut rng, PLANE);
    for t in (1..=schedule.steps()).rev() {
        let ab = schedule.alpha_bar(t);
        let mut eps = denoiser.forward(&build_input(&x, &cond), t);
        let skip = prior_skip(schedule, t);
        eps.data_mut().iter_mut().zip(&x).for_each(|(o, xv)| *o += skip * xv);
        let (sa, sb) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        let mut x0: Vec<f32> = x
            .iter()
            .zip(eps.data())
            .map(|(xv, e)| ((xv - sb * e) / sa).clamp(-X0_CLIP, X0_CLIP))
            .collect();
        if model.data_consistency {
            let w = ((1.0 - ab) / ((1.0 - ab) + noise_var)) as f32;
            for ((v, &yv), &p) in x0.iter_mut().zip(&y).zip(&pilot) {
                if p {
                    *v += w * (yv - *v);
                }
            }
        }
        if t == 1 {
            x = x0;
        } else {
            let (c0, ct, var) = schedule.posterior(t);
            let sd = var.sqrt() as f32;
            let (c0, ct) = (c0 as f32, ct as f32);
            for (xv, x0v) in x.iter_mut().zip(&x0) {
                let z: f32 = StandardNormal.sample(&mut rng);
                *xv = c0 * x0v + ct * *xv + sd * z;
            }
        }
    }
    let planes: Vec<f32> = x.iter().map(|v| v / DATA_SCALE).collect();
    Ok(ChannelMatrix::from_planes(&planes))
}

/// Mean of `draws` independent ancestral samples, an approximation of the
/// posterior mean. A single draw is the posterior sample itself, whose
/// expected squared error is twice that of the mean.
pub fn estimate_posterior_mean(
    obs: &PilotObservation,
    model: &DiffusionEstimator,
    seed: u64,
    draws: usize,
) -> Result<ChannelMatrix, DiffusionError> {
    if draws == 0 {
        return Err(DiffusionError::Config("need at least one draw".into()));
    }
    if draws == 1 {
        return estimate_channel(obs, model, seed);
    }
    let mut acc = vec![0.0f32; PLANE];
    for j in 0..draws as u64 {
        let h = estimate_channel(obs, model, derive_seed(seed, &[tag("draw"), j]))?;
        acc.iter_mut().zip(h.to_planes()).for_each(|(a, v)| *a += v);
    }
    let inv = 1.0 / draws as f32;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(ChannelMatrix::from_planes(&acc))
}

/// Seed for the `k`-th estimate drawn from one base seed.
pub fn sampling_seed(base: u64, k: u64) -> u64 {
    derive_seed(base, &[tag("estimate"), k])
}
