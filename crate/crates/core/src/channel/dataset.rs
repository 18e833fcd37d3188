use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::{generate_channel_with, MultipathParams};
use super::sample::{AugmentKind, ChannelMatrix, ChannelSample, Origin, GRID_LEN, N_ANT, N_SC};
use super::scenario::{Environment, ScenarioClass};
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "samples.bin";
/// Bytes per sample in `samples.bin`.
pub const SAMPLE_BYTES: usize = GRID_LEN * 2 * 4;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset size must be positive")]
    EmptyConfig,
    #[error("imbalance ratio parts must be positive, got {nlos}:{los}")]
    BadRatio { nlos: u32, los: u32 },
    #[error("dataset is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("grid {found:?} does not match {expected:?}")]
    GridMismatch { found: [usize; 2], expected: [usize; 2] },
    #[error("payload truncated: {len} bytes is not a whole number of {SAMPLE_BYTES}-byte samples")]
    Truncated { len: u64 },
    #[error("manifest lists {manifest} samples but payload holds {payload}")]
    CountMismatch { manifest: usize, payload: usize },
    #[error("manifest per-class counts disagree with its sample list")]
    InconsistentManifest,
    #[error("payload digest {found} does not match the manifest's {expected}")]
    CorruptPayload { expected: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// NLoS:LoS proportion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceRatio {
    pub nlos: u32,
    pub los: u32,
}

impl Default for ImbalanceRatio {
    fn default() -> Self {
        Self { nlos: 1, los: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub total: usize,
    pub ratio: ImbalanceRatio,
    pub multipath: MultipathParams,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            total: 10_000,
            ratio: ImbalanceRatio::default(),
            multipath: MultipathParams::default(),
        }
    }
}

impl GenerationConfig {
    pub fn with_total(total: usize, nlos: u32, los: u32) -> Self {
        Self {
            total,
            ratio: ImbalanceRatio { nlos, los },
            ..Self::default()
        }
    }

    /// `(nlos, los)` sample counts; NLoS takes the floor of its share.
    pub fn environment_counts(&self) -> (usize, usize) {
        let parts = (self.ratio.nlos + self.ratio.los) as usize;
        let nlos = self.total * self.ratio.nlos as usize / parts;
        (nlos, self.total - nlos)
    }
}

/// Per-sample metadata carried in the manifest, in payload order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub scenario: ScenarioClass,
    pub seed: u64,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented: Option<AugmentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub grid: [usize; 2],
    pub counts: BTreeMap<ScenarioClass, usize>,
    pub generator: Option<GenerationConfig>,
    pub seed: Option<u64>,
    pub samples: Vec<SampleRecord>,
}

/// On-disk manifest: the in-memory manifest plus the payload digest.
#[derive(Serialize, Deserialize)]
struct ManifestFile {
    #[serde(flatten)]
    manifest: Manifest,
    payload_sha256: String,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// An immutable, ordered collection of channel samples with a consistent manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    samples: Vec<ChannelSample>,
    manifest: Manifest,
}

fn record(s: &ChannelSample) -> SampleRecord {
    SampleRecord {
        scenario: s.scenario,
        seed: s.seed,
        origin: s.origin,
        augmented: s.augmented,
        generator: s.generator.clone(),
    }
}

impl ChannelDataset {
    pub fn from_samples(
        samples: Vec<ChannelSample>,
        generator: Option<GenerationConfig>,
        seed: Option<u64>,
    ) -> Self {
        let mut counts = BTreeMap::new();
        for s in &samples {
            *counts.entry(s.scenario).or_insert(0) += 1;
        }
        let manifest = Manifest {
            version: FORMAT_VERSION,
            grid: [N_ANT, N_SC],
            counts,
            generator,
            seed,
            samples: samples.iter().map(record).collect(),
        };
        Self { samples, manifest }
    }

    /// New dataset with the same generator provenance but a different sample list.
    pub fn with_samples(&self, samples: Vec<ChannelSample>) -> Self {
        Self::from_samples(samples, self.manifest.generator.clone(), self.manifest.seed)
    }

    pub fn samples(&self) -> &[ChannelSample] {
        &self.samples
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_environment(&self, env: Environment) -> usize {
        self.samples
            .iter()
            .filter(|s| s.scenario.environment == env)
            .count()
    }

    pub fn count_class(&self, class: ScenarioClass) -> usize {
        self.manifest.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn into_samples(self) -> Vec<ChannelSample> {
        self.samples
    }
}

/// Splits `n` as evenly as possible over `parts` buckets, earlier buckets first.
fn split_even(n: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| n / parts + usize::from(i < n % parts))
        .collect()
}

/// Simulates an imbalanced dataset: NLoS/LoS per the ratio, uniform over the
/// six classes inside each environment, deterministically shuffled.
pub fn build_dataset(config: &GenerationConfig, seed: u64) -> Result<ChannelDataset, DatasetError> {
    if config.total == 0 {
        return Err(DatasetError::EmptyConfig);
    }
    if config.ratio.nlos == 0 || config.ratio.los == 0 {
        return Err(DatasetError::BadRatio {
            nlos: config.ratio.nlos,
            los: config.ratio.los,
        });
    }
    let (nlos, los) = config.environment_counts();
    let mut plan = Vec::with_capacity(config.total);
    for (env, n) in [(Environment::Los, los), (Environment::Nlos, nlos)] {
        let classes = ScenarioClass::of_environment(env);
        for (class, count) in classes.iter().zip(split_even(n, classes.len())) {
            for k in 0..count {
                plan.push((*class, k as u64));
            }
        }
    }
    let mut samples: Vec<ChannelSample> = plan
        .into_iter()
        .map(|(class, k)| {
            let sample_seed = rng::derive_seed(seed, &[rng::tag("sample"), class.index() as u64, k]);
            generate_channel_with(class, sample_seed, &config.multipath)
        })
        .collect();
    samples.shuffle(&mut rng::derived_rng(seed, &[rng::tag("shuffle")]));
    Ok(ChannelDataset::from_samples(samples, Some(config.clone()), Some(seed)))
}

/// Writes `manifest.json` and `samples.bin` into `dir`, creating it if needed.
pub fn save_dataset(ds: &ChannelDataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut buf = Vec::with_capacity(ds.len() * SAMPLE_BYTES);
    for s in &ds.samples {
        for c in s.h.as_slice() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let file = ManifestFile {
        manifest: ds.manifest.clone(),
        payload_sha256: hex_digest(&buf),
    };
    let json = serde_json::to_vec_pretty(&file).map_err(|source| DatasetError::Manifest {
        path: manifest_path.clone(),
        source,
    })?;
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

    let payload_path = dir.join(PAYLOAD_FILE);
    let mut f = fs::File::create(&payload_path).map_err(io_err(&payload_path))?;
    f.write_all(&buf).map_err(io_err(&payload_path))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<ChannelDataset, DatasetError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let ManifestFile {
        manifest,
        payload_sha256,
    } = serde_json::from_slice(&text).map_err(|source| DatasetError::Manifest {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.grid != [N_ANT, N_SC] {
        return Err(DatasetError::GridMismatch {
            found: manifest.grid,
            expected: [N_ANT, N_SC],
        });
    }
    let mut counts = BTreeMap::new();
    for r in &manifest.samples {
        *counts.entry(r.scenario).or_insert(0usize) += 1;
    }
    if counts != manifest.counts {
        return Err(DatasetError::InconsistentManifest);
    }

    let payload_path = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&payload_path).map_err(io_err(&payload_path))?;
    if bytes.len() % SAMPLE_BYTES != 0 {
        return Err(DatasetError::Truncated {
            len: bytes.len() as u64,
        });
    }
    let n = bytes.len() / SAMPLE_BYTES;
    if n != manifest.samples.len() {
        return Err(DatasetError::CountMismatch {
            manifest: manifest.samples.len(),
            payload: n,
        });
    }
    let found = hex_digest(&bytes);
    if found != payload_sha256 {
        return Err(DatasetError::CorruptPayload {
            expected: payload_sha256,
            found,
        });
    }
    let samples = bytes
        .chunks_exact(SAMPLE_BYTES)
        .zip(&manifest.samples)
        .map(|(chunk, r)| {
            let h = ChannelMatrix::from_vec(
                chunk
                    .chunks_exact(8)
                    .map(|b| {
                        Complex32::new(
                            f32::from_le_bytes(b[0..4].try_into().unwrap()),
                            f32::from_le_bytes(b[4..8].try_into().unwrap()),
                        )
                    })
                    .collect(),
            );
            ChannelSample {
                h,
                scenario: r.scenario,
                seed: r.seed,
                origin: r.origin,
                augmented: r.augmented,
                generator: r.generator.clone(),
            }
        })
        .collect();
    Ok(ChannelDataset { samples, manifest })
}
