use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{condition_vector, Discriminator, Generator};
use super::{GanConfig, GanError, MIN_NLOS_SAMPLES};
use crate::channel::{ChannelSample, Environment, ScenarioClass, GRID_LEN};
use crate::nn::{Adam, Module, Real};
use crate::rng::{derived_rng, tag, Rng};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanHistory {
    pub generator_loss: Vec<f64>,
    pub discriminator_loss: Vec<f64>,
    /// Mean pairwise squared distance per complex entry of a generated batch.
    /// Independent unit-power channels score about 2.
    pub diversity: Vec<f64>,
}

/// A trained generator together with the classes it was conditioned on.
#[derive(Debug, Clone)]
pub struct TrainedGenerator {
    pub net: Generator<f32>,
    pub classes: Vec<ScenarioClass>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn latent(rng: &mut Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Mean over pairs of `sum |a - b|^2 / GRID_LEN`.
pub fn batch_diversity(batch: &[Vec<f32>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            let d: f64 = batch[i]
                .iter()
                .zip(&batch[j])
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum();
            total += d / GRID_LEN as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

fn check_finite(value: f64, epoch: usize, network: &'static str) -> Result<(), GanError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(GanError::NonFinite { epoch, network, value })
    }
}

fn clip_weights<F: Real, M: Module<F>>(model: &mut M, c: f64) {
    let c = F::lit(c);
    model.visit_mut(&mut |p| p.value.iter_mut().for_each(|v| *v = v.max(-c).min(c)));
}

/// Alternating single-step adversarial training on NLoS samples.
///
/// Each batch makes one discriminator step on the real batch and an equally
/// sized fake batch (fakes reuse the real samples' classes), then one
/// generator step. The default objective is the non-saturating loss; with
/// `wasserstein` set the critic loss is `D(fake) - D(real)` with weight
/// clipping.
pub fn train_gan(
    nlos_samples: &[ChannelSample],
    cfg: &GanConfig,
) -> Result<(TrainedGenerator, Discriminator<f32>, GanHistory), GanError> {
    cfg.validate()?;
    if let Some(s) = nlos_samples.iter().find(|s| s.scenario.environment != Environment::Nlos) {
        return Err(GanError::WrongEnvironment(s.scenario));
    }
    if nlos_samples.len() < MIN_NLOS_SAMPLES {
        return Err(GanError::TooFewSamples {
            got: nlos_samples.len(),
            min: MIN_NLOS_SAMPLES,
        });
    }
    let train = &cfg.train;
    let mut init = derived_rng(train.seed, &[tag("gan-init")]);
    let mut gen = Generator::<f32>::new(cfg.latent_dim, cfg.channels, &mut init);
    let mut disc = Discriminator::<f32>::new(cfg.channels, &mut init);
    let mut opt_g = Adam::from_config(train);
    let mut opt_d = Adam::from_config(train);

    let mut classes: Vec<ScenarioClass> = nlos_samples.iter().map(|s| s.scenario).collect();
    classes.sort();
    classes.dedup();

    let reals: Vec<Vec<f32>> = nlos_samples.iter().map(|s| s.h.normalized().to_planes()).collect();
    let conds: Vec<[f32; 5]> = nlos_samples.iter().map(|s| condition_vector(s.scenario)).collect();
    let mut order: Vec<usize> = (0..reals.len()).collect();
    let mut history = GanHistory::default();

    for epoch in 0..train.epochs {
        let mut rng = derived_rng(train.seed, &[tag("gan-epoch"), epoch as u64]);
        order.shuffle(&mut rng);
        let (mut d_total, mut g_total, mut batches) = (0.0f64, 0.0f64, 0usize);
        for batch in order.chunks(train.batch_size) {
            let inv = 1.0 / batch.len() as f64;

            disc.zero_grad();
            let mut d_loss = 0.0;
            for &i in batch {
                let logit = disc.forward(&reals[i], &conds[i]) as f64;
                let g = if cfg.wasserstein {
                    d_loss -= logit;
                    -1.0
                } else {
                    d_loss += softplus(-logit);
                    -sigmoid(-logit)
                };
                disc.backward((g * inv) as f32);

                let z = latent(&mut rng, cfg.latent_dim);
                let fake = gen.forward(&z, &conds[i]);
                let logit = disc.forward(&fake, &conds[i]) as f64;
                let g = if cfg.wasserstein {
                    d_loss += logit;
                    1.0
                } else {
                    d_loss += softplus(logit);
                    sigmoid(logit)
                };
                disc.backward((g * inv) as f32);
            }
            d_loss *= inv;
            check_finite(d_loss, epoch, "discriminator")?;
            opt_d.step(&mut disc);
            if cfg.wasserstein {
                clip_weights(&mut disc, cfg.weight_clip);
            }

            gen.zero_grad();
            let mut g_loss = 0.0;
            for &i in batch {
                let z = latent(&mut rng, cfg.latent_dim);
                let fake = gen.forward(&z, &conds[i]);
                let logit = disc.forward(&fake, &conds[i]) as f64;
                let g = if cfg.wasserstein {
                    g_loss -= logit;
                    -1.0
                } else {
                    g_loss += softplus(-logit);
                    -sigmoid(-logit)
                };
                let gx = disc.backward((g * inv) as f32);
                gen.backward(&gx);
            }
            g_loss *= inv;
            check_finite(g_loss, epoch, "generator")?;
            opt_g.step(&mut gen);

            d_total += d_loss;
            g_total += g_loss;
            batches += 1;
        }
        history.discriminator_loss.push(d_total / batches as f64);
        history.generator_loss.push(g_total / batches as f64);

        let mut probe = derived_rng(train.seed, &[tag("gan-diversity"), epoch as u64]);
        let batch: Vec<Vec<f32>> = (0..cfg.diversity_batch)
            .map(|k| {
                let z = latent(&mut probe, cfg.latent_dim);
                gen.forward(&z, &condition_vector(classes[k % classes.len()]))
            })
            .collect();
        let diversity = batch_diversity(&batch);
        if diversity < cfg.diversity_threshold {
            log::warn!(
                "possible mode collapse in epoch {epoch}: batch diversity {diversity:.4} below {}",
                cfg.diversity_threshold
            );
        }
        history.diversity.push(diversity);
        log::debug!(
            "gan epoch {epoch}: D {:.4} G {:.4} diversity {diversity:.3}",
            history.discriminator_loss[epoch],
            history.generator_loss[epoch]
        );
    }
    Ok((TrainedGenerator { net: gen, classes }, disc, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diversity_oracle() {
        let a = vec![1.0f32; 2 * GRID_LEN];
        let b = vec![-1.0f32; 2 * GRID_LEN];
        // |a - b|^2 = 4 per real component, 8 per complex entry.
        assert!((batch_diversity(&[a.clone(), b]) - 8.0).abs() < 1e-12);
        assert_eq!(batch_diversity(&[a.clone(), a.clone(), a]), 0.0);
        assert_eq!(batch_diversity(&[]), 0.0);
    }

    #[test]
    fn training_rejects_bad_input_and_is_deterministic() {
        use crate::channel::generate_channel;
        let nlos = ScenarioClass::of_environment(Environment::Nlos);
        let real: Vec<ChannelSample> = (0..256u64).map(|s| generate_channel(nlos[(s % 6) as usize], s)).collect();
        let mut cfg = GanConfig {
            channels: 4,
            ..GanConfig::default()
        };
        cfg.train.epochs = 2;
        assert!(matches!(
            train_gan(&real[..255], &cfg),
            Err(GanError::TooFewSamples { got: 255, min: 256 })
        ));
        let mut mixed = real.clone();
        mixed[10] = generate_channel(ScenarioClass::of_environment(Environment::Los)[0], 1);
        assert!(matches!(train_gan(&mixed, &cfg), Err(GanError::WrongEnvironment(_))));
        let (g1, _, h1) = train_gan(&real, &cfg).unwrap();
        let (g2, _, h2) = train_gan(&real, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.generator_loss.len(), 2);
        assert_eq!(g1.digest(), g2.digest());
        assert_eq!(g1.classes, nlos);
        cfg.wasserstein = true;
        let (_, d, hw) = train_gan(&real, &cfg).unwrap();
        assert!(hw.discriminator_loss.iter().all(|v| v.is_finite()));
        let mut within = true;
        d.visit(&mut |p| within &= p.value.iter().all(|v| v.abs() <= 0.01 + 1e-7));
        assert!(within, "critic weights must be clipped");
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0 && softplus(-100.0) < 1e-40);
    }
}
