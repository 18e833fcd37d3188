use num_complex::Complex32;
use rustfft::FftPlanner;

use super::sample::{ChannelMatrix, N_ANT, N_SC, TAP_DURATION_S};

/// Power-delay profile: IDFT across subcarriers per antenna, averaged over
/// antennas. Not normalised.
pub fn power_delay_profile(h: &ChannelMatrix) -> [f64; N_SC] {
    let ifft = FftPlanner::<f32>::new().plan_fft_inverse(N_SC);
    let mut pdp = [0.0f64; N_SC];
    let mut buf: Vec<Complex32> = Vec::with_capacity(N_SC);
    for a in 0..N_ANT {
        buf.clear();
        buf.extend_from_slice(h.row(a));
        ifft.process(&mut buf);
        for (p, c) in pdp.iter_mut().zip(&buf) {
            *p += c.norm_sqr() as f64 / (N_SC * N_SC * N_ANT) as f64;
        }
    }
    pdp
}

/// RMS delay spread in taps: square root of the second central moment of the PDP.
pub fn rms_delay_spread_taps(h: &ChannelMatrix) -> f64 {
    let pdp = power_delay_profile(h);
    let total: f64 = pdp.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return 0.0;
    }
    let mean = pdp.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() / total;
    let var = pdp
        .iter()
        .enumerate()
        .map(|(k, p)| (k as f64 - mean).powi(2) * p)
        .sum::<f64>()
        / total;
    var.max(0.0).sqrt()
}

/// RMS delay spread in seconds.
pub fn rms_delay_spread(h: &ChannelMatrix) -> f64 {
    rms_delay_spread_taps(h) * TAP_DURATION_S
}

#[cfg(test)]
mod tests {
    use std::f32::consts::PI;

    use super::*;

    /// Channel whose impulse response has unit taps at the given delays.
    fn taps(delays: &[usize]) -> ChannelMatrix {
        ChannelMatrix::from_fn(|_, s| {
            delays
                .iter()
                .map(|&d| Complex32::from_polar(1.0, -2.0 * PI * (s * d) as f32 / N_SC as f32))
                .sum()
        })
    }

    #[test]
    fn single_tap_has_zero_spread() {
        assert!(rms_delay_spread_taps(&taps(&[0])) < 1e-6);
        assert!(rms_delay_spread_taps(&taps(&[7])) < 1e-3);
    }

    #[test]
    fn two_equal_taps() {
        // Equal weights at 0 and 4: mean 2, second central moment 4, spread 2 taps.
        let spread = rms_delay_spread_taps(&taps(&[0, 4]));
        assert!((spread - 2.0).abs() < 1e-4, "{spread}");
        assert!((rms_delay_spread(&taps(&[0, 4])) - 2.0 * TAP_DURATION_S).abs() < 1e-12);
    }

    #[test]
    fn spread_is_scale_invariant() {
        let h = taps(&[1, 2, 6]);
        let a = rms_delay_spread_taps(&h);
        let b = rms_delay_spread_taps(&h.scaled(37.0));
        assert!((a - b).abs() < 1e-6 * a.max(1.0));
    }
}
