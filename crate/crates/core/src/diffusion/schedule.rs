use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::nn::Real;

pub const DEFAULT_STEPS: usize = 60;
pub const DEFAULT_BETA_START: f64 = 1e-4;
/// With 60 linear steps this puts alpha_bar_T near 0.009.
pub const DEFAULT_BETA_END: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

/// Linear variance schedule. Steps are 1-based: `t` in `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, DiffusionError> {
    NoiseSchedule::new(ScheduleParams {
        steps,
        beta_start,
        beta_end,
    })
}

impl NoiseSchedule {
    pub fn new(params: ScheduleParams) -> Result<Self, DiffusionError> {
        let ScheduleParams {
            steps,
            beta_start,
            beta_end,
        } = params;
        if steps < 1 {
            return Err(DiffusionError::Schedule("at least one step is required".into()));
        }
        for b in [beta_start, beta_end] {
            if !(b > 0.0 && b < 1.0) {
                return Err(DiffusionError::Schedule(format!("beta {b} outside (0, 1)")));
            }
        }
        if beta_start > beta_end {
            return Err(DiffusionError::Schedule(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let alpha_bars = betas
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            params,
            betas,
            alpha_bars,
        })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> Result<usize, DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::StepOutOfRange { t, steps: self.steps() });
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `alpha_bar_{t-1}`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Coefficients `(c_x0, c_xt, variance)` of the Gaussian posterior
    /// `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        let ab = self.alpha_bar(t);
        let ab_prev = self.alpha_bar_prev(t);
        let beta = self.beta(t);
        let c_x0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let c_xt = self.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let var = beta * (1.0 - ab_prev) / (1.0 - ab);
        (c_x0, c_xt, var)
    }
}

/// `sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps` for an explicit `alpha_bar`.
pub fn q_sample_with<F: Real>(alpha_bar: f64, x0: &[F], eps: &[F]) -> Vec<F> {
    let a = F::lit(alpha_bar.sqrt());
    let b = F::lit((1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect()
}

/// Forward noising to step `t`.
pub fn q_sample<F: Real>(x0: &[F], t: usize, eps: &[F], schedule: &NoiseSchedule) -> Result<Vec<F>, DiffusionError> {
    let i = schedule.index(t)?;
    if x0.len() != eps.len() {
        return Err(DiffusionError::Shape(format!("x0 has {} entries, noise {}", x0.len(), eps.len())));
    }
    Ok(q_sample_with(schedule.alpha_bars[i], x0, eps))
}
