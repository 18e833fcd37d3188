//! Minimal differentiable building blocks shared by the GAN and the diffusion
//! denoiser.
//!
//! Layers cache what they need during `forward` and accumulate parameter
//! gradients during `backward`; a forward pass must precede each backward
//! pass. Everything is generic over [`Real`] so the same model can be
//! instantiated in `f64` for finite-difference checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod linalg;
pub mod optim;
pub mod tensor;

pub use attention::{attention_forward, AttentionConfig, SelfAttention};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use layers::{conv2d_forward, sinusoidal_embedding, AvgPool2, Conv2d, ConvTranspose2x2, LeakyRelu, Linear, Silu};
pub use optim::{Adam, TrainConfig};
pub use tensor::{Tensor, TensorSpec};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
}

impl<F: Real> Param<F> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![F::zero(); n],
            grad: vec![F::zero(); n],
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut crate::rng::Rng) -> Self {
        use rand::Rng as _;
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            *v = F::lit(rng.random_range(-bound..=bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters, visited in declaration order.
pub trait Module<F: Real> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.grad.iter_mut().for_each(|g| *g = F::zero()));
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.shape.clone())));
        out
    }

    /// Copies parameter values from a structurally identical module of any precision.
    fn copy_params_from<G: Real, M: Module<G> + ?Sized>(&mut self, other: &M) -> Result<(), NnError>
    where
        Self: Sized,
    {
        let mut values: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        other.visit(&mut |p| values.push((p.shape.clone(), p.value.iter().map(|v| v.as_f64()).collect())));
        let mut idx = 0;
        let mut err = None;
        self.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match values.get(idx) {
                Some((shape, vals)) if *shape == p.shape => {
                    for (d, s) in p.value.iter_mut().zip(vals) {
                        *d = F::lit(*s);
                    }
                }
                _ => err = Some(NnError::Shape(format!("parameter {} ({})", idx, p.name))),
            }
            idx += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if idx != values.len() {
            return Err(NnError::Shape(format!("{} vs {} parameters", idx, values.len())));
        }
        Ok(())
    }
}
