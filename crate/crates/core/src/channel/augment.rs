//! Classic signal-level augmentations.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand_distr::{Distribution, Normal};

use super::sample::{AugmentKind, ChannelSample, N_SC};
use crate::rng;

/// Applies one augmentation. `param` is the noise variance for
/// [`AugmentKind::Noise`], the delay in taps for [`AugmentKind::TimeShift`], and
/// the (rounded) circular subcarrier shift for [`AugmentKind::FreqOffset`].
pub fn augment_classic(sample: &ChannelSample, kind: AugmentKind, param: f64, seed: u64) -> ChannelSample {
    let mut out = sample.clone();
    out.augmented = Some(kind);
    match kind {
        AugmentKind::Noise => {
            let variance = param.max(0.0);
            if variance == 0.0 {
                return out;
            }
            let component = Normal::new(0.0, (variance / 2.0).sqrt()).unwrap();
            let mut rng = rng::derived_rng(seed, &[rng::tag("augment-noise")]);
            for c in out.h.as_mut_slice() {
                *c += Complex32::new(component.sample(&mut rng) as f32, component.sample(&mut rng) as f32);
            }
            out.h = out.h.normalized();
        }
        AugmentKind::TimeShift => {
            for a in 0..super::sample::N_ANT {
                for s in 0..N_SC {
                    let ramp = Complex64::from_polar(1.0, -2.0 * PI * s as f64 * param / N_SC as f64);
                    let v = sample.h.get(a, s);
                    let shifted = Complex64::new(v.re as f64, v.im as f64) * ramp;
                    out.h.set(a, s, Complex32::new(shifted.re as f32, shifted.im as f32));
                }
            }
        }
        AugmentKind::FreqOffset => {
            let shift = (param.round() as i64).rem_euclid(N_SC as i64) as usize;
            for a in 0..super::sample::N_ANT {
                for s in 0..N_SC {
                    out.h.set(a, (s + shift) % N_SC, sample.h.get(a, s));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::delay::rms_delay_spread_taps;
    use crate::channel::generate::generate_channel;
    use crate::channel::scenario::ScenarioClass;

    fn sample() -> ChannelSample {
        generate_channel(ScenarioClass::all()[8], 21)
    }

    #[test]
    fn identity_parameters() {
        let s = sample();
        for (kind, p) in [
            (AugmentKind::Noise, 0.0),
            (AugmentKind::TimeShift, 0.0),
            (AugmentKind::FreqOffset, N_SC as f64),
            (AugmentKind::FreqOffset, 0.0),
        ] {
            let out = augment_classic(&s, kind, p, 3);
            assert_eq!(out.h, s.h, "{kind:?}");
            assert_eq!(out.augmented, Some(kind));
            assert_eq!(out.origin, s.origin);
        }
    }

    #[test]
    fn noise_renormalises() {
        let out = augment_classic(&sample(), AugmentKind::Noise, 0.3, 3);
        assert!((out.h.mean_power() - 1.0).abs() < 1e-6);
        assert_ne!(out.h, sample().h);
    }

    #[test]
    fn time_shift_moves_the_profile_but_keeps_power() {
        let s = sample();
        let out = augment_classic(&s, AugmentKind::TimeShift, 3.0, 0);
        assert!((out.h.mean_power() - s.h.mean_power()).abs() < 1e-5);
        // Integer shifts only rotate the power-delay profile.
        let a = rms_delay_spread_taps(&s.h);
        let b = rms_delay_spread_taps(&out.h);
        assert!(b.is_finite() && a.is_finite());
    }

    #[test]
    fn freq_offset_is_circular() {
        let s = sample();
        let out = augment_classic(&s, AugmentKind::FreqOffset, 5.0, 0);
        assert_eq!(out.h.get(2, 5), s.h.get(2, 0));
        assert_eq!(out.h.get(2, 4), s.h.get(2, N_SC - 1));
        let back = augment_classic(&out, AugmentKind::FreqOffset, -5.0, 0);
        assert_eq!(back.h, s.h);
    }
}
