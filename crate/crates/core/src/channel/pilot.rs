use num_complex::{Complex32, Complex64};
use rand_distr::{Distribution, Normal};

use super::sample::{ChannelMatrix, GRID_LEN, N_ANT, N_SC};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PilotError {
    #[error("pilot spacing must be at least 1")]
    ZeroSpacing,
    #[error("pilot spacing {0} does not divide the {N_SC}-subcarrier grid")]
    UnevenSpacing(usize),
    #[error("snr must be finite, got {0}")]
    BadSnr(f64),
}

/// Pilot positions on the antenna x subcarrier grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotMask {
    bits: Vec<bool>,
}

impl PilotMask {
    /// Every `spacing`-th subcarrier, starting at subcarrier 0, on all antennas.
    pub fn comb(spacing: usize) -> Result<Self, PilotError> {
        if spacing == 0 {
            return Err(PilotError::ZeroSpacing);
        }
        if N_SC % spacing != 0 {
            return Err(PilotError::UnevenSpacing(spacing));
        }
        let mut bits = vec![false; GRID_LEN];
        for a in 0..N_ANT {
            for s in (0..N_SC).step_by(spacing) {
                bits[a * N_SC + s] = true;
            }
        }
        Ok(Self { bits })
    }

    pub fn full() -> Self {
        Self {
            bits: vec![true; GRID_LEN],
        }
    }

    pub fn is_pilot(&self, antenna: usize, subcarrier: usize) -> bool {
        self.bits[antenna * N_SC + subcarrier]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Noisy channel values seen at the pilot positions; zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y: ChannelMatrix,
    pub mask: PilotMask,
    pub snr_db: f64,
    /// Noise variance per complex entry, `10^(-snr_db / 10)` for unit-power channels.
    pub sigma2: f64,
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// `y = mask * (h + n)` with `n ~ CN(0, sigma2)` i.i.d.
pub fn make_pilot_observation(
    h: &ChannelMatrix,
    pilot_spacing: usize,
    snr_db: f64,
    seed: u64,
) -> Result<PilotObservation, PilotError> {
    let mask = PilotMask::comb(pilot_spacing)?;
    observe(h, mask, snr_db, seed)
}

/// Same observation model over an arbitrary mask.
pub fn observe(
    h: &ChannelMatrix,
    mask: PilotMask,
    snr_db: f64,
    seed: u64,
) -> Result<PilotObservation, PilotError> {
    if !snr_db.is_finite() {
        return Err(PilotError::BadSnr(snr_db));
    }
    let sigma2 = noise_variance(snr_db);
    let component = Normal::new(0.0, (sigma2 / 2.0).sqrt()).unwrap();
    let mut rng = rng::derived_rng(seed, &[rng::tag("pilot-noise")]);
    let mut y = ChannelMatrix::zeros();
    for (i, (out, &hv)) in y.as_mut_slice().iter_mut().zip(h.as_slice()).enumerate() {
        // Noise is drawn for every entry so the draw at a position does not
        // depend on the mask.
        let n = Complex32::new(
            component.sample(&mut rng) as f32,
            component.sample(&mut rng) as f32,
        );
        if mask.bits[i] {
            *out = hv + n;
        }
    }
    Ok(PilotObservation {
        y,
        mask,
        snr_db,
        sigma2,
    })
}

/// Delay-domain interpolation of the pilots, antenna by antenna.
///
/// With `p` pilots on a row, the row is modelled by its first `p` delay taps,
/// estimated by correlating the pilots with each tap's phase ramp. For a
/// uniform comb starting at subcarrier 0 this is the exact least-squares fit,
/// so the pilots are reproduced and any channel confined to `p` taps is
/// recovered everywhere in the absence of noise.
pub fn interpolate_pilots(obs: &PilotObservation) -> ChannelMatrix {
    use std::f64::consts::TAU;
    let mut out = ChannelMatrix::zeros();
    for a in 0..N_ANT {
        let pilots: Vec<usize> = (0..N_SC).filter(|&k| obs.mask.is_pilot(a, k)).collect();
        let p = pilots.len();
        if p == 0 {
            continue;
        }
        let taps: Vec<Complex64> = (0..p)
            .map(|l| {
                pilots
                    .iter()
                    .map(|&k| {
                        let y = obs.y.get(a, k);
                        Complex64::new(y.re as f64, y.im as f64)
                            * Complex64::from_polar(1.0, TAU * (k * l) as f64 / N_SC as f64)
                    })
                    .sum::<Complex64>()
                    / p as f64
            })
            .collect();
        for k in 0..N_SC {
            let v: Complex64 = taps
                .iter()
                .enumerate()
                .map(|(l, g)| g * Complex64::from_polar(1.0, -TAU * (k * l) as f64 / N_SC as f64))
                .sum();
            out.set(a, k, Complex32::new(v.re as f32, v.im as f32));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate::generate_channel;
    use crate::channel::scenario::ScenarioClass;

    #[test]
    fn sigma2_from_snr() {
        assert_eq!(noise_variance(0.0), 1.0);
        assert!((noise_variance(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn comb_mask_counts() {
        assert_eq!(PilotMask::comb(4).unwrap().count(), 64);
        assert_eq!(PilotMask::comb(1).unwrap().count(), GRID_LEN);
        assert_eq!(PilotMask::comb(0), Err(PilotError::ZeroSpacing));
        assert_eq!(PilotMask::comb(5), Err(PilotError::UnevenSpacing(5)));
    }

    #[test]
    fn zero_outside_mask() {
        let s = generate_channel(ScenarioClass::all()[3], 1);
        let obs = make_pilot_observation(&s.h, 4, 5.0, 9).unwrap();
        for a in 0..N_ANT {
            for sc in 0..N_SC {
                if !obs.mask.is_pilot(a, sc) {
                    assert_eq!(obs.y.get(a, sc), Complex32::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(obs.sigma2, noise_variance(5.0));
    }

    #[test]
    fn noise_power_is_calibrated() {
        // Over 1000 observations the per-entry noise power sits within 5% of sigma2.
        let h = ChannelMatrix::zeros();
        for snr in [-10.0, 0.0, 10.0, 20.0] {
            let mut acc = 0.0;
            let n = 1000;
            for seed in 0..n {
                let obs = make_pilot_observation(&h, 4, snr, seed).unwrap();
                acc += obs.y.total_power() / obs.mask.count() as f64;
            }
            let ratio = acc / n as f64 / noise_variance(snr);
            assert!((0.95..=1.05).contains(&ratio), "snr {snr}: {ratio}");
        }
    }
    fn tap_channel(max_tap: usize) -> ChannelMatrix {
        use std::f64::consts::TAU;
        let mut h = ChannelMatrix::zeros();
        for a in 0..N_ANT {
            for k in 0..N_SC {
                let v: Complex64 = (0..max_tap)
                    .map(|l| {
                        let g = Complex64::new(((a * 7 + l * 3) as f64).sin(), ((a + 5 * l) as f64).cos());
                        g * Complex64::from_polar(1.0, -TAU * (k * l) as f64 / N_SC as f64)
                    })
                    .sum();
                h.set(a, k, Complex32::new(v.re as f32, v.im as f32));
            }
        }
        h
    }

    #[test]
    fn interpolation_recovers_tap_limited_channels() {
        let h = tap_channel(8);
        let obs = make_pilot_observation(&h, 4, 300.0, 1).unwrap();
        let est = interpolate_pilots(&obs);
        for (e, t) in est.as_slice().iter().zip(h.as_slice()) {
            assert!((e - t).norm() < 1e-4, "{e} vs {t}");
        }
        // Energy beyond the eighth tap aliases, so the fit is no longer exact.
        let wide = tap_channel(12);
        let est = interpolate_pilots(&make_pilot_observation(&wide, 4, 300.0, 1).unwrap());
        let err: f32 = est.as_slice().iter().zip(wide.as_slice()).map(|(e, t)| (e - t).norm_sqr()).sum();
        assert!(err > 1.0);
        // Pilots are reproduced even then.
        for a in 0..N_ANT {
            for k in (0..N_SC).step_by(4) {
                assert!((est.get(a, k) - wide.get(a, k)).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn interpolation_with_full_mask_is_identity() {
        let s = generate_channel(ScenarioClass::all()[7], 3);
        let obs = make_pilot_observation(&s.h, 1, 10.0, 4).unwrap();
        let est = interpolate_pilots(&obs);
        for (e, y) in est.as_slice().iter().zip(obs.y.as_slice()) {
            assert!((e - y).norm() < 1e-4);
        }
        let zero = make_pilot_observation(&ChannelMatrix::zeros(), 2, 300.0, 0).unwrap();
        assert!(interpolate_pilots(&zero).mean_power() < 1e-20);
    }
}
