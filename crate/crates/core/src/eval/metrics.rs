use super::EvalError;
use crate::channel::{generate_channel, observe, ChannelMatrix, PilotMask, ScenarioClass};
use crate::rng::{derive_seed, tag};

/// `||est - truth||^2 / ||truth||^2`, linear.
pub fn nmse(est: &ChannelMatrix, truth: &ChannelMatrix) -> Result<f64, EvalError> {
    let den = truth.total_power();
    if !(den > 0.0) {
        return Err(EvalError::ZeroReference);
    }
    let num: f64 = est
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).norm_sqr() as f64)
        .sum();
    Ok(num / den)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Monte-Carlo NMSE of the raw-pilot estimate `H = y` with every entry a
/// pilot. Channels cycle through all scenario classes.
pub fn ls_baseline_nmse(snr_db: f64, n_samples: usize, seed: u64) -> Result<f64, EvalError> {
    if n_samples < 1 {
        return Err(EvalError::Config("ls_baseline_nmse needs at least one sample".into()));
    }
    let classes = ScenarioClass::all();
    let mut total = 0.0;
    for k in 0..n_samples {
        let h = generate_channel(classes[k % classes.len()], derive_seed(seed, &[tag("ls-channel"), k as u64])).h;
        let obs = observe(&h, PilotMask::full(), snr_db, derive_seed(seed, &[tag("ls-noise"), k as u64]))?;
        total += nmse(&obs.y, &h)?;
    }
    Ok(total / n_samples as f64)
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use num_complex::Complex32;

    use super::*;

    #[test]
    fn nmse_identities() {
        let h = generate_channel(ScenarioClass::all()[7], 2).h;
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert!((nmse(&ChannelMatrix::zeros(), &h).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmse(&h.scaled(2.0), &h).unwrap() - 1.0).abs() < 1e-6);
        assert!(matches!(nmse(&h, &ChannelMatrix::zeros()), Err(EvalError::ZeroReference)));
        let e = ChannelMatrix::from_fn(|a, s| h.get(a, s) + Complex32::new(0.1, -0.2));
        let base = nmse(&e, &h).unwrap();
        assert!((nmse(&e.scaled(-3.0), &h.scaled(-3.0)).unwrap() - base).abs() < 1e-5 * base);
    }

    #[test]
    fn ls_baseline_tracks_noise_variance() {
        assert!((ls_baseline_nmse(0.0, 400, 1).unwrap() - 1.0).abs() < 0.1);
        assert!(ls_baseline_nmse(200.0, 10, 1).unwrap() < 1e-15);
        assert!(ls_baseline_nmse(0.0, 0, 1).is_err());
    }

    #[test]
    fn mean_std_oracle() {
        assert_eq!(mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).0, 5.0);
        assert!((mean_std(&[1.0, 3.0]).1 - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
