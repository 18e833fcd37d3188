use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{condition_vector, Discriminator, Generator};
use super::train::{latent, TrainedGenerator};
use super::GanError;
use crate::channel::{ChannelDataset, ChannelMatrix, ChannelSample, Environment, Origin, ScenarioClass};
use crate::nn::Checkpoint;
use crate::rng::{derive_seed, rng_from, tag};

#[derive(Debug, Serialize, Deserialize)]
struct GeneratorMeta {
    kind: String,
    latent_dim: usize,
    channels: usize,
    classes: Vec<ScenarioClass>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiscriminatorMeta {
    kind: String,
    channels: usize,
}

impl TrainedGenerator {
    pub fn checkpoint(&self) -> Checkpoint {
        let meta = GeneratorMeta {
            kind: "gan-generator".into(),
            latent_dim: self.net.latent_dim(),
            channels: self.net.channels(),
            classes: self.classes.clone(),
        };
        Checkpoint::from_module(&self.net, serde_json::to_string(&meta).expect("metadata serialises"))
    }

    /// Hex digest of the checkpoint; recorded on every synthesised sample.
    pub fn digest(&self) -> String {
        self.checkpoint().digest()
    }

    pub fn save(&self, path: &Path) -> Result<(), GanError> {
        self.checkpoint().save(path).map_err(|e| GanError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GanError> {
        let ck = Checkpoint::load(path).map_err(|e| GanError::Checkpoint(e.to_string()))?;
        let meta: GeneratorMeta =
            serde_json::from_str(&ck.metadata).map_err(|e| GanError::Checkpoint(format!("metadata: {e}")))?;
        if meta.kind != "gan-generator" {
            return Err(GanError::Checkpoint(format!("not a generator checkpoint ({})", meta.kind)));
        }
        let mut net = Generator::new(meta.latent_dim, meta.channels, &mut rng_from(0));
        ck.load_into(&mut net).map_err(|e| GanError::Checkpoint(e.to_string()))?;
        Ok(Self {
            net,
            classes: meta.classes,
        })
    }
}

pub fn save_discriminator(disc: &Discriminator<f32>, path: &Path) -> Result<(), GanError> {
    let meta = DiscriminatorMeta {
        kind: "gan-discriminator".into(),
        channels: disc.channels(),
    };
    Checkpoint::from_module(disc, serde_json::to_string(&meta).expect("metadata serialises"))
        .save(path)
        .map_err(|e| GanError::Checkpoint(e.to_string()))
}

pub fn load_discriminator(path: &Path) -> Result<Discriminator<f32>, GanError> {
    let ck = Checkpoint::load(path).map_err(|e| GanError::Checkpoint(e.to_string()))?;
    let meta: DiscriminatorMeta =
        serde_json::from_str(&ck.metadata).map_err(|e| GanError::Checkpoint(format!("metadata: {e}")))?;
    if meta.kind != "gan-discriminator" {
        return Err(GanError::Checkpoint(format!("not a discriminator checkpoint ({})", meta.kind)));
    }
    let mut disc = Discriminator::new(meta.channels, &mut rng_from(0));
    ck.load_into(&mut disc).map_err(|e| GanError::Checkpoint(e.to_string()))?;
    Ok(disc)
}

/// `n` synthetic NLoS samples of one class; deterministic in `seed`.
pub fn synthesize_nlos(
    generator: &TrainedGenerator,
    n: usize,
    scenario: ScenarioClass,
    seed: u64,
) -> Result<Vec<ChannelSample>, GanError> {
    if scenario.environment != Environment::Nlos {
        return Err(GanError::WrongEnvironment(scenario));
    }
    if !generator.classes.contains(&scenario) {
        return Err(GanError::ScenarioMismatch(scenario));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let digest = generator.digest();
    let mut net = generator.net.clone();
    let cond = condition_vector(scenario);
    Ok((0..n as u64)
        .map(|k| {
            let sample_seed = derive_seed(seed, &[tag("gan-synth"), scenario.index() as u64, k]);
            let z = latent(&mut rng_from(sample_seed), net.latent_dim());
            let h = ChannelMatrix::from_planes(&net.forward(&z, &cond)).normalized();
            let mut s = ChannelSample::new(h, scenario, sample_seed, Origin::GanSynthetic);
            s.generator = Some(digest.clone());
            s
        })
        .collect())
}

/// Discriminator probability that `h` is a real channel of class `scenario`.
///
/// The input is power-normalised first, so the discriminator only ever sees
/// unit-power matrices. Inputs that cannot be normalised (non-finite or zero
/// power) score 0.
pub fn realism_score_of(disc: &Discriminator<f32>, h: &ChannelMatrix, scenario: ScenarioClass) -> f64 {
    let power = h.mean_power();
    if !h.is_finite() || !(power > 0.0) {
        return 0.0;
    }
    let logit = disc.clone().forward(&h.normalized().to_planes(), &condition_vector(scenario)) as f64;
    let p = 1.0 / (1.0 + (-logit).exp());
    if p.is_finite() {
        p
    } else {
        0.0
    }
}

pub fn realism_score(disc: &Discriminator<f32>, sample: &ChannelSample) -> f64 {
    realism_score_of(disc, &sample.h, sample.scenario)
}

/// Appends synthetic NLoS samples until NLoS and LoS counts match.
///
/// Each synthetic sample goes to the generator class with the fewest NLoS
/// samples so far (earliest class on ties). Existing samples are kept as-is
/// and in order.
pub fn balance_dataset(ds: &ChannelDataset, generator: &TrainedGenerator, seed: u64) -> Result<ChannelDataset, GanError> {
    let los = ds.count_environment(Environment::Los);
    let nlos = ds.count_environment(Environment::Nlos);
    let deficit = los.saturating_sub(nlos);
    if deficit == 0 {
        return Ok(ds.clone());
    }
    let mut classes = generator.classes.clone();
    classes.retain(|c| c.environment == Environment::Nlos);
    if classes.is_empty() {
        return Err(GanError::ScenarioMismatch(
            generator.classes.first().copied().unwrap_or_else(|| ScenarioClass::all()[0]),
        ));
    }
    let mut current: BTreeMap<ScenarioClass, usize> = classes.iter().map(|c| (*c, ds.count_class(*c))).collect();
    let mut plan: BTreeMap<ScenarioClass, usize> = BTreeMap::new();
    for _ in 0..deficit {
        let next = *classes
            .iter()
            .min_by_key(|c| current[c])
            .expect("non-empty class list");
        *current.get_mut(&next).unwrap() += 1;
        *plan.entry(next).or_insert(0) += 1;
    }
    let mut samples = ds.samples().to_vec();
    for class in &classes {
        if let Some(&n) = plan.get(class) {
            samples.extend(synthesize_nlos(generator, n, *class, seed)?);
        }
    }
    Ok(ds.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dataset, generate_channel, CarrierBand, GenerationConfig, Mobility};
    use crate::gan::{train_gan, GanConfig};

    fn tiny_gan(seed: u64) -> (TrainedGenerator, Discriminator<f32>) {
        let classes = ScenarioClass::of_environment(Environment::Nlos);
        let real: Vec<ChannelSample> = (0..256u64).map(|s| generate_channel(classes[(s % 6) as usize], s)).collect();
        let mut cfg = GanConfig {
            channels: 4,
            ..GanConfig::default()
        };
        cfg.train.epochs = 1;
        cfg.train.seed = seed;
        let (g, d, _) = train_gan(&real, &cfg).unwrap();
        (g, d)
    }

    fn nlos_class() -> ScenarioClass {
        ScenarioClass::new(Environment::Nlos, CarrierBand::Low, Mobility::Urban)
    }

    #[test]
    fn synthesis_contract() {
        let (g, _) = tiny_gan(1);
        assert!(synthesize_nlos(&g, 0, nlos_class(), 3).unwrap().is_empty());
        let batch = synthesize_nlos(&g, 100, nlos_class(), 3).unwrap();
        assert_eq!(batch.len(), 100);
        let digest = g.digest();
        for s in &batch {
            assert_eq!(s.origin, Origin::GanSynthetic);
            assert_eq!(s.scenario, nlos_class());
            assert_eq!(s.generator.as_deref(), Some(digest.as_str()));
            assert!((s.h.mean_power() - 1.0).abs() < 1e-6);
        }
        assert_eq!(batch, synthesize_nlos(&g, 100, nlos_class(), 3).unwrap());
        assert_ne!(batch[0].h, synthesize_nlos(&g, 1, nlos_class(), 4).unwrap()[0].h);
        let los = ScenarioClass::new(Environment::Los, CarrierBand::Low, Mobility::Urban);
        assert!(matches!(synthesize_nlos(&g, 1, los, 0), Err(GanError::WrongEnvironment(_))));
    }

    #[test]
    fn realism_is_a_probability_and_deterministic() {
        let (_, d) = tiny_gan(2);
        let s = generate_channel(nlos_class(), 11);
        let a = realism_score(&d, &s);
        assert!((0.0..=1.0).contains(&a));
        assert_eq!(a, realism_score(&d, &s));
        assert_eq!(realism_score_of(&d, &ChannelMatrix::zeros(), nlos_class()), 0.0);
        let mut nan = s.h.clone();
        nan.as_mut_slice()[0].re = f32::NAN;
        assert_eq!(realism_score_of(&d, &nan, nlos_class()), 0.0);
    }

    #[test]
    fn balancing_counts_and_preserves_real_samples() {
        let (g, _) = tiny_gan(3);
        let ds = build_dataset(&GenerationConfig::with_total(500, 1, 4), 7).unwrap();
        let out = balance_dataset(&ds, &g, 9).unwrap();
        let los = ds.count_environment(Environment::Los);
        assert_eq!(out.count_environment(Environment::Los), los);
        assert_eq!(out.count_environment(Environment::Nlos), los);
        assert_eq!(&out.samples()[..ds.len()], ds.samples());
        let added = &out.samples()[ds.len()..];
        assert_eq!(added.len(), los - ds.count_environment(Environment::Nlos));
        assert!(added.iter().all(|s| s.origin == Origin::GanSynthetic && s.scenario.environment == Environment::Nlos));
        for class in ScenarioClass::all() {
            let actual = out.samples().iter().filter(|s| s.scenario == class).count();
            assert_eq!(out.count_class(class), actual);
        }
        // Greedy filling leaves NLoS classes within one sample of each other.
        let nlos: Vec<usize> = ScenarioClass::of_environment(Environment::Nlos)
            .into_iter()
            .map(|c| out.count_class(c))
            .collect();
        assert!(nlos.iter().max().unwrap() - nlos.iter().min().unwrap() <= 1);
        let again = balance_dataset(&out, &g, 9).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn generator_checkpoint_round_trip() {
        let (g, d) = tiny_gan(4);
        let dir = tempfile::tempdir().unwrap();
        g.save(&dir.path().join("g.ckpt")).unwrap();
        let back = TrainedGenerator::load(&dir.path().join("g.ckpt")).unwrap();
        assert_eq!(back.digest(), g.digest());
        assert_eq!(back.classes, g.classes);
        save_discriminator(&d, &dir.path().join("d.ckpt")).unwrap();
        let d2 = load_discriminator(&dir.path().join("d.ckpt")).unwrap();
        let s = generate_channel(nlos_class(), 5);
        assert_eq!(realism_score(&d, &s), realism_score(&d2, &s));
        assert!(matches!(
            TrainedGenerator::load(&dir.path().join("d.ckpt")),
            Err(GanError::Checkpoint(_))
        ));
    }
}
