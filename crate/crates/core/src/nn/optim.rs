use serde::{Deserialize, Serialize};

use super::{Module, NnError, Real};

/// Optimisation hyper-parameters shared by every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NnError::Config("moment coefficients must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adaptive-moment optimiser with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    t: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr: F::lit(lr),
            beta1: F::lit(beta1),
            beta2: F::lit(beta2),
            eps: F::lit(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.beta1, cfg.beta2)
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = F::lit(lr);
    }

    /// One update from the gradients currently accumulated in `model`.
    pub fn step<M: Module<F> + ?Sized>(&mut self, model: &mut M) {
        self.t += 1;
        let c1 = F::one() - self.beta1.powi(self.t);
        let c2 = F::one() - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        model.visit_mut(&mut |p| {
            if ms.len() <= idx {
                ms.push(vec![F::zero(); p.len()]);
                vs.push(vec![F::zero(); p.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            for i in 0..p.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (F::one() - b1) * g;
                v[i] = b2 * v[i] + (F::one() - b2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value[i] -= lr * mh / (vh.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    struct Scalar(Param<f64>);

    impl Module<f64> for Scalar {
        fn visit(&self, f: &mut dyn FnMut(&Param<f64>)) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        // f(w) = (w - 3)^2 / 2
        let mut w = Scalar(Param::zeros("w", &[1]));
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        for _ in 0..500 {
            w.zero_grad();
            w.0.grad[0] = w.0.value[0] - 3.0;
            opt.step(&mut w);
        }
        assert!((w.0.value[0] - 3.0).abs() < 1e-3, "{}", w.0.value[0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
