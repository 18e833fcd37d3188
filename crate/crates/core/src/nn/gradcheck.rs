use rand::seq::index::sample;

use super::{Module, NnError, Real};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Parameters sampled for checking (all of them if the model has fewer).
    pub num_params: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            num_params: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares backprop gradients with central differences.
///
/// `loss(model, backprop)` must evaluate the loss on a fixed input and, when
/// `backprop` is true, accumulate parameter gradients into the (already
/// zeroed) model. The relative error per parameter is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<F, M, L>(model: &mut M, mut loss: L, cfg: GradCheckConfig) -> Result<GradCheckReport, NnError>
where
    F: Real,
    M: Module<F>,
    L: FnMut(&mut M, bool) -> F,
{
    model.zero_grad();
    let base = loss(model, true).as_f64();
    if !base.is_finite() {
        return Err(NnError::NonFiniteLoss(base));
    }
    let mut analytic = Vec::new();
    model.visit(&mut |p| analytic.extend(p.grad.iter().map(|g| g.as_f64())));

    let total = analytic.len();
    let mut rng = rng::rng_from(cfg.seed);
    let mut picked: Vec<usize> = sample(&mut rng, total, cfg.num_params.min(total)).into_vec();
    picked.sort_unstable();

    let eps = F::lit(cfg.epsilon);
    let mut max_rel: f64 = 0.0;
    for &flat in &picked {
        let mut eval = |delta: F, model: &mut M| {
            nudge(model, flat, delta);
            let l = loss(model, false).as_f64();
            nudge(model, flat, -delta);
            l
        };
        let plus = eval(eps, model);
        let minus = eval(-eps, model);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NnError::NonFiniteLoss(if plus.is_finite() { minus } else { plus }));
        }
        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        let a = analytic[flat];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: picked.len(),
    })
}

fn nudge<F: Real, M: Module<F>>(model: &mut M, flat: usize, delta: F) {
    let mut offset = 0;
    model.visit_mut(&mut |p| {
        if flat >= offset && flat < offset + p.len() {
            p.value[flat - offset] += delta;
        }
        offset += p.len();
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    /// Identity model whose single parameter tensor is the input itself.
    struct Identity(Param<f64>);

    impl Module<f64> for Identity {
        fn visit(&self, f: &mut dyn FnMut(&Param<f64>)) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn quadratic_on_identity() {
        let mut m = Identity(Param::zeros("x", &[80]));
        for (i, v) in m.0.value.iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin() + 0.1;
        }
        let report = gradient_check(
            &mut m,
            |m, backprop| {
                if backprop {
                    for i in 0..m.0.len() {
                        m.0.grad[i] += m.0.value[i];
                    }
                }
                0.5 * m.0.value.iter().map(|v| v * v).sum::<f64>()
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 50);
        assert!(report.max_rel_error < 1e-6, "{}", report.max_rel_error);
    }

    #[test]
    fn constant_model_has_zero_error() {
        let mut m = Identity(Param::zeros("x", &[10]));
        let report = gradient_check(&mut m, |_, _| 0.0, GradCheckConfig::default()).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert_eq!(report.checked, 10);
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let mut m = Identity(Param::zeros("x", &[3]));
        let err = gradient_check(&mut m, |_, _| f64::NAN, GradCheckConfig::default()).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteLoss(_)));
    }
}
