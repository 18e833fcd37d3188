//! Outlier and duplicate removal.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{ChannelDataset, DatasetError};
use super::sample::ChannelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanPolicy {
    /// Drop samples whose total-power z-score exceeds the threshold in magnitude.
    Zscore,
    /// Drop samples whose total power falls outside the Tukey fences.
    Iqr,
    /// Drop later copies of samples whose quantised payload hashes equal.
    HashDedup,
}

pub const DEFAULT_ZSCORE_THRESHOLD: f64 = 3.0;
/// Fence multiplier for [`CleanPolicy::Iqr`].
pub const IQR_FENCE: f64 = 1.5;

/// Quantile with linear interpolation between order statistics (position `(n - 1) q`).
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Stable 64-bit hash of the payload with every component rounded to 6 decimals.
pub fn payload_hash(h: &ChannelMatrix) -> u64 {
    let mut hasher = Sha256::new();
    for c in h.as_slice() {
        for v in [c.re, c.im] {
            let q = (v as f64 * 1e6).round() as i64;
            hasher.update(q.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn flagged(powers: &[f64], policy: CleanPolicy, threshold: f64) -> Vec<bool> {
    match policy {
        CleanPolicy::Zscore => {
            let n = powers.len() as f64;
            let mean = powers.iter().sum::<f64>() / n;
            let std = (powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
            if std == 0.0 {
                return vec![false; powers.len()];
            }
            powers
                .iter()
                .map(|p| ((p - mean) / std).abs() > threshold)
                .collect()
        }
        CleanPolicy::Iqr => {
            let mut sorted = powers.to_vec();
            sorted.sort_by(f64::total_cmp);
            let q1 = quantile_linear(&sorted, 0.25);
            let q3 = quantile_linear(&sorted, 0.75);
            let iqr = q3 - q1;
            let (lo, hi) = (q1 - IQR_FENCE * iqr, q3 + IQR_FENCE * iqr);
            powers.iter().map(|&p| p < lo || p > hi).collect()
        }
        CleanPolicy::HashDedup => unreachable!(),
    }
}

/// Removes flagged samples, preserving survivor order. Returns the cleaned
/// dataset and the removed indices (ascending). `threshold` only applies to
/// [`CleanPolicy::Zscore`].
pub fn clean_dataset(
    ds: &ChannelDataset,
    policy: CleanPolicy,
    threshold: f64,
) -> Result<(ChannelDataset, Vec<usize>), DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    let remove: Vec<bool> = match policy {
        CleanPolicy::HashDedup => {
            let mut seen = HashSet::new();
            ds.samples()
                .iter()
                .map(|s| !seen.insert(payload_hash(&s.h)))
                .collect()
        }
        _ => {
            let powers: Vec<f64> = ds.samples().iter().map(|s| s.h.total_power()).collect();
            flagged(&powers, policy, threshold)
        }
    };
    let removed: Vec<usize> = remove
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.then_some(i))
        .collect();
    let kept = ds
        .samples()
        .iter()
        .zip(&remove)
        .filter(|(_, r)| !**r)
        .map(|(s, _)| s.clone())
        .collect();
    Ok((ds.with_samples(kept), removed))
}
