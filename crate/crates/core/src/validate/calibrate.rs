use serde::{Deserialize, Serialize};

use super::{ValidateError, ValidatorConfig};
use crate::channel::clean::quantile_linear as quantile;
use crate::channel::{rms_delay_spread_taps, ChannelSample, Environment};
use crate::gan::{realism_score, Discriminator};

/// Quantile of the realism scores used as the threshold.
pub const REALISM_QUANTILE: f64 = 0.05;

/// Smallest spread used when taking logs (a single-tap channel has spread 0).
const SPREAD_FLOOR_TAPS: f64 = 1e-3;

/// What the thresholds were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub realism_quantile: f64,
    pub realism_samples: usize,
    pub los_median_spread_taps: f64,
    pub nlos_median_spread_taps: f64,
    pub spread_samples: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// 5th percentile of realism over held-out real samples, kept inside (0, 1).
pub fn calibrate_realism(disc: &Discriminator<f32>, held_out: &[ChannelSample]) -> Result<f64, ValidateError> {
    if held_out.is_empty() {
        return Err(ValidateError::Calibration("no held-out samples for the realism threshold".into()));
    }
    let mut scores: Vec<f64> = held_out.iter().map(|s| realism_score(disc, s)).collect();
    scores.sort_by(f64::total_cmp);
    Ok(quantile(&scores, REALISM_QUANTILE).clamp(1e-6, 1.0 - 1e-6))
}

/// Geometric mean of the LoS and NLoS median delay spreads, i.e. the midpoint
/// in log spread. Returns `(boundary, los_median, nlos_median)` in taps.
pub fn calibrate_delay_boundary(training: &[ChannelSample]) -> Result<(f64, f64, f64), ValidateError> {
    let logs = |env: Environment| -> Vec<f64> {
        training
            .iter()
            .filter(|s| s.scenario.environment == env && s.h.is_finite())
            .map(|s| rms_delay_spread_taps(&s.h).max(SPREAD_FLOOR_TAPS).ln())
            .collect()
    };
    let (los, nlos) = (logs(Environment::Los), logs(Environment::Nlos));
    if los.is_empty() || nlos.is_empty() {
        return Err(ValidateError::Calibration("delay boundary needs both LoS and NLoS samples".into()));
    }
    let (ml, mn) = (median(los), median(nlos));
    if ml >= mn {
        return Err(ValidateError::Calibration(format!(
            "LoS median spread {:.3} is not below NLoS {:.3}",
            ml.exp(),
            mn.exp()
        )));
    }
    Ok((((ml + mn) / 2.0).exp(), ml.exp(), mn.exp()))
}

/// Default bounds plus both calibrated thresholds.
pub fn calibrate(
    disc: &Discriminator<f32>,
    training: &[ChannelSample],
    held_out: &[ChannelSample],
) -> Result<ValidatorConfig, ValidateError> {
    let theta = calibrate_realism(disc, held_out)?;
    let (boundary, los, nlos) = calibrate_delay_boundary(training)?;
    let mut cfg = ValidatorConfig::with_thresholds(theta, boundary);
    cfg.calibration = Some(Calibration {
        realism_quantile: REALISM_QUANTILE,
        realism_samples: held_out.len(),
        los_median_spread_taps: los,
        nlos_median_spread_taps: nlos,
        spread_samples: training.len(),
    });
    cfg.validate()?;
    Ok(cfg)
}
