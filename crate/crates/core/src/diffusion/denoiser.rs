use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::channel::{N_ANT, N_SC};
use crate::nn::{sinusoidal_embedding, AttentionConfig, Conv2d, Linear, Module, Param, Real, SelfAttention, Silu, Tensor};
use crate::rng::Rng;

/// Input planes: noisy channel (re, im), pilot mask, observation (re, im),
/// interpolated pilots (re, im), reliability.
pub const IN_CHANNELS: usize = 8;
pub const OUT_CHANNELS: usize = 2;
const TOKENS: usize = N_ANT * N_SC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub channels: usize,
    pub res_blocks: usize,
    pub time_dim: usize,
    pub attention: bool,
    pub heads: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            res_blocks: 3,
            time_dim: 16,
            attention: true,
            heads: 1,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.channels == 0 || self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(DiffusionError::Config(
                "channels must be positive and time_dim a positive even number".into(),
            ));
        }
        if self.attention {
            AttentionConfig {
                embed_dim: self.channels,
                num_heads: self.heads,
            }
            .validate()
            .map_err(|e| DiffusionError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Learned positional embedding initialised with 2-D sinusoids: the first half
/// of the channels encodes the antenna index, the second half the subcarrier.
fn grid_positional_init<F: Real>(channels: usize) -> Param<F> {
    use std::f64::consts::TAU;
    let mut p = Param::zeros("attn.pos", &[channels, TOKENS]);
    let half = channels / 2;
    for ch in 0..channels {
        let (axis_len, k) = if ch < half { (N_ANT, ch / 2 + 1) } else { (N_SC, (ch - half) / 2 + 1) };
        for a in 0..N_ANT {
            for s in 0..N_SC {
                let pos = if ch < half { a } else { s };
                let phase = TAU * (k * pos) as f64 / axis_len as f64;
                let v = if (ch - if ch < half { 0 } else { half }) % 2 == 0 { phase.sin() } else { phase.cos() };
                p.value[ch * TOKENS + a * N_SC + s] = F::lit(v);
            }
        }
    }
    p
}

#[derive(Debug, Clone)]
struct AttentionStage<F> {
    pos: Param<F>,
    attn: SelfAttention<F>,
}

/// Noise predictor `eps_theta(x_t, t, y, mask)` on the 8 x 32 grid.
///
/// conv_in + SiLU, time embedding added per channel, optional self-attention
/// over all 256 grid positions (learned positional embedding, residual),
/// residual 3x3 conv blocks, zero-initialised output conv.
#[derive(Debug, Clone)]
pub struct Denoiser<F> {
    cfg: DenoiserConfig,
    conv_in: Conv2d<F>,
    act_in: Silu<F>,
    time_fc1: Linear<F>,
    time_act: Silu<F>,
    time_fc2: Linear<F>,
    attention: Option<AttentionStage<F>>,
    blocks: Vec<(Conv2d<F>, Silu<F>)>,
    head: Conv2d<F>,
}

impl<F: Real> Denoiser<F> {
    pub fn new(cfg: DenoiserConfig, rng: &mut Rng) -> Result<Self, DiffusionError> {
        cfg.validate()?;
        let c = cfg.channels;
        let attention = if cfg.attention {
            let attn = SelfAttention::new(
                "attn",
                AttentionConfig {
                    embed_dim: c,
                    num_heads: cfg.heads,
                },
                rng,
            )
            .map_err(|e| DiffusionError::Config(e.to_string()))?;
            Some(AttentionStage {
                pos: grid_positional_init(c),
                attn,
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            conv_in: Conv2d::new("conv_in", IN_CHANNELS, c, rng),
            act_in: Silu::default(),
            time_fc1: Linear::new("time.fc1", cfg.time_dim, c, rng),
            time_act: Silu::default(),
            time_fc2: Linear::new("time.fc2", c, c, rng),
            attention,
            blocks: (0..cfg.res_blocks)
                .map(|i| (Conv2d::new(&format!("block{i}"), c, c, rng), Silu::default()))
                .collect(),
            head: Conv2d::zeroed("head", c, OUT_CHANNELS),
        })
    }

    pub fn config(&self) -> DenoiserConfig {
        self.cfg
    }

    /// Predicts the noise for a `[IN_CHANNELS, 8, 32]` input at step `t`.
    pub fn forward(&mut self, x: &Tensor<F>, t: usize) -> Tensor<F> {
        let c = self.cfg.channels;
        let h = self.conv_in.forward(x);
        let mut h = self.act_in.forward(h.data());
        let temb = sinusoidal_embedding::<F>(t as f64, self.cfg.time_dim);
        let temb = self.time_fc1.forward(&temb);
        let temb = self.time_act.forward(&temb);
        let temb = self.time_fc2.forward(&temb);
        for (ch, tv) in h.chunks_exact_mut(TOKENS).zip(&temb) {
            ch.iter_mut().for_each(|v| *v += *tv);
        }
        if let Some(stage) = &mut self.attention {
            let input: Vec<F> = h.iter().zip(&stage.pos.value).map(|(a, b)| *a + *b).collect();
            let a = stage.attn.forward(&input, TOKENS);
            h.iter_mut().zip(&a).for_each(|(v, d)| *v += *d);
        }
        let mut h = Tensor::from_vec(&[c, N_ANT, N_SC], h).unwrap();
        for (conv, act) in &mut self.blocks {
            let r = conv.forward(&h);
            let r = act.forward(r.data());
            h.data_mut().iter_mut().zip(&r).for_each(|(v, d)| *v += *d);
        }
        self.head.forward(&h)
    }

    /// Backpropagates `d loss / d output`, accumulating parameter gradients.
    pub fn backward(&mut self, grad: &Tensor<F>) {
        let c = self.cfg.channels;
        let mut g = self.head.backward(grad);
        for (conv, act) in self.blocks.iter_mut().rev() {
            let gr = act.backward(g.data());
            let gr = conv.backward(&Tensor::from_vec(&[c, N_ANT, N_SC], gr).unwrap());
            g.add_assign(&gr);
        }
        let mut g = g.into_data();
        if let Some(stage) = &mut self.attention {
            let ga = stage.attn.backward(&g);
            for ((pg, gv), a) in stage.pos.grad.iter_mut().zip(g.iter_mut()).zip(&ga) {
                *pg += *a;
                *gv += *a;
            }
        }
        let gt: Vec<F> = g.chunks_exact(TOKENS).map(|ch| ch.iter().copied().sum()).collect();
        let gt = self.time_fc2.backward(&gt);
        let gt = self.time_act.backward(&gt);
        self.time_fc1.backward(&gt);
        let g = self.act_in.backward(&g);
        self.conv_in.backward(&Tensor::from_vec(&[c, N_ANT, N_SC], g).unwrap());
    }

    /// Attention map of the last forward pass, if attention is enabled.
    pub fn last_attention(&self) -> Option<&[F]> {
        self.attention.as_ref().and_then(|s| s.attn.last_weights())
    }
}

impl<F: Real> Module<F> for Denoiser<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.conv_in.visit(f);
        self.time_fc1.visit(f);
        self.time_fc2.visit(f);
        if let Some(s) = &self.attention {
            f(&s.pos);
            s.attn.visit(f);
        }
        for (conv, _) in &self.blocks {
            conv.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.conv_in.visit_mut(f);
        self.time_fc1.visit_mut(f);
        self.time_fc2.visit_mut(f);
        if let Some(s) = &mut self.attention {
            f(&mut s.pos);
            s.attn.visit_mut(f);
        }
        for (conv, _) in &mut self.blocks {
            conv.visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}
