//! Clustered multipath generator.
//!
//! `h[a, s] = sum_p g_p e^{j phi_p} e^{-j 2 pi s df tau_p} e^{j 2 pi a (d / lambda) sin theta_p}`,
//! power-normalised afterwards. Delays are snapped to the tap grid of the
//! subcarrier IDFT so that delay-spread statistics are free of circular leakage.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::sample::{ChannelMatrix, ChannelSample, Origin, N_ANT, N_SC, SUBCARRIER_SPACING_HZ, TAP_DURATION_S};
use super::scenario::{CarrierBand, Environment, ScenarioClass};
use crate::rng;

/// Fixed parameters of the multipath model, recorded in dataset manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultipathParams {
    pub subcarrier_spacing_hz: f64,
    pub antenna_spacing_wavelengths: f64,
    pub los_k_factor_db: f64,
    pub los_weak_paths: usize,
    pub los_mean_delay_s: f64,
    pub nlos_paths: usize,
    pub nlos_mean_delay_s: f64,
    pub low_band_aoa_half_width_deg: f64,
    pub high_band_cluster_spread_deg: f64,
    pub mobility_jitter_std_rad: [f64; 3],
}

impl Default for MultipathParams {
    fn default() -> Self {
        Self {
            subcarrier_spacing_hz: SUBCARRIER_SPACING_HZ,
            antenna_spacing_wavelengths: 0.5,
            los_k_factor_db: 10.0,
            los_weak_paths: 4,
            los_mean_delay_s: 30e-9,
            nlos_paths: 12,
            nlos_mean_delay_s: 300e-9,
            low_band_aoa_half_width_deg: 60.0,
            high_band_cluster_spread_deg: 5.0,
            mobility_jitter_std_rad: [0.0, 0.1, 0.4],
        }
    }
}

struct Path {
    gain: f64,
    phase: f64,
    delay_s: f64,
    aoa_rad: f64,
}

fn snap_delay(delay_s: f64) -> f64 {
    let taps = (delay_s / TAP_DURATION_S).round().clamp(0.0, (N_SC - 1) as f64);
    taps * TAP_DURATION_S
}

fn draw_paths(scenario: ScenarioClass, p: &MultipathParams, rng: &mut rng::Rng) -> Vec<Path> {
    let half_width = p.low_band_aoa_half_width_deg.to_radians();
    let cluster_centre = rng.random_range(-half_width..=half_width);
    let cluster = Normal::new(0.0, p.high_band_cluster_spread_deg.to_radians()).unwrap();
    let aoa = |rng: &mut rng::Rng| match scenario.band {
        CarrierBand::Low => rng.random_range(-half_width..=half_width),
        CarrierBand::High => cluster_centre + cluster.sample(rng),
    };

    match scenario.environment {
        Environment::Los => {
            let k = 10f64.powf(p.los_k_factor_db / 10.0);
            let delays = Exp::new(1.0 / p.los_mean_delay_s).unwrap();
            let unit = Exp::new(1.0).unwrap();
            let mut paths = vec![Path {
                gain: (k / (k + 1.0)).sqrt(),
                phase: rng.random_range(0.0..2.0 * PI),
                delay_s: 0.0,
                aoa_rad: match scenario.band {
                    CarrierBand::Low => aoa(rng),
                    CarrierBand::High => cluster_centre,
                },
            }];
            let weights: Vec<f64> = (0..p.los_weak_paths).map(|_| unit.sample(rng)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights {
                paths.push(Path {
                    gain: (w / total / (k + 1.0)).sqrt(),
                    phase: rng.random_range(0.0..2.0 * PI),
                    delay_s: snap_delay(delays.sample(rng)),
                    aoa_rad: aoa(rng),
                });
            }
            paths
        }
        Environment::Nlos => {
            let delays = Exp::new(1.0 / p.nlos_mean_delay_s).unwrap();
            let component = Normal::new(0.0, (0.5 / p.nlos_paths as f64).sqrt()).unwrap();
            (0..p.nlos_paths)
                .map(|_| {
                    let g = Complex64::new(component.sample(rng), component.sample(rng));
                    Path {
                        gain: g.norm(),
                        phase: rng.random_range(0.0..2.0 * PI),
                        delay_s: snap_delay(delays.sample(rng)),
                        aoa_rad: aoa(rng),
                    }
                })
                .collect()
        }
    }
}

/// Draws one power-normalised channel; deterministic in `(scenario, seed)`.
pub fn generate_channel(scenario: ScenarioClass, seed: u64) -> ChannelSample {
    generate_channel_with(scenario, seed, &MultipathParams::default())
}

pub fn generate_channel_with(
    scenario: ScenarioClass,
    seed: u64,
    params: &MultipathParams,
) -> ChannelSample {
    let mut rng = rng::derived_rng(seed, &[rng::tag("channel"), scenario.index() as u64]);
    let paths = draw_paths(scenario, params, &mut rng);

    let jitter_std = params.mobility_jitter_std_rad[scenario.mobility as usize];
    let jitter = Normal::new(0.0, jitter_std.max(0.0)).unwrap();
    let mut acc = vec![Complex64::new(0.0, 0.0); N_ANT * N_SC];
    for path in &paths {
        let spatial = 2.0 * PI * params.antenna_spacing_wavelengths * path.aoa_rad.sin();
        let delay_step = -2.0 * PI * params.subcarrier_spacing_hz * path.delay_s;
        for a in 0..N_ANT {
            let j = if jitter_std > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
            let base = path.phase + j + spatial * a as f64;
            for s in 0..N_SC {
                acc[a * N_SC + s] += Complex64::from_polar(path.gain, base + delay_step * s as f64);
            }
        }
    }

    let mean_power = acc.iter().map(|c| c.norm_sqr()).sum::<f64>() / acc.len() as f64;
    let k = 1.0 / mean_power.sqrt();
    let h = ChannelMatrix::from_vec(
        acc.iter()
            .map(|c| Complex32::new((c.re * k) as f32, (c.im * k) as f32))
            .collect(),
    );
    ChannelSample::new(h, scenario, seed, Origin::Simulated)
}
