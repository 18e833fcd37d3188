//! Scaled dot-product self-attention.
//!
//! The layer works on channel-first maps `[D, L]` (features x positions), which
//! is how convolutional feature maps are laid out; [`attention_forward`] wraps
//! it for the conventional `[B, L, D]` layout.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm_nn, gemm_nt, gemm_tn, transpose};
use super::{Module, NnError, Param, Real, Tensor};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub embed_dim: usize,
    pub num_heads: usize,
}

impl AttentionConfig {
    pub fn single_head(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            num_heads: 1,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(NnError::Config(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

#[derive(Debug, Clone)]
struct Cache<F> {
    x: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// Row-stochastic attention matrices, one `L x L` block per head.
    p: Vec<F>,
    o: Vec<F>,
    len: usize,
}

/// Projections `W_Q`, `W_K`, `W_V`, `W_out`, each `[D, D]` acting on row vectors.
/// The residual connection is left to the caller.
#[derive(Debug, Clone)]
pub struct SelfAttention<F> {
    cfg: AttentionConfig,
    pub wq: Param<F>,
    pub wk: Param<F>,
    pub wv: Param<F>,
    pub wo: Param<F>,
    cache: Option<Cache<F>>,
}

fn softmax_rows<F: Real>(s: &mut [F], n: usize) {
    for row in s.chunks_exact_mut(n) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = F::one() / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

impl<F: Real> SelfAttention<F> {
    pub fn new(name: &str, cfg: AttentionConfig, rng: &mut Rng) -> Result<Self, NnError> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let bound = 1.0 / (d as f64).sqrt();
        Ok(Self {
            cfg,
            wq: Param::uniform(format!("{name}.wq"), &[d, d], bound, rng),
            wk: Param::uniform(format!("{name}.wk"), &[d, d], bound, rng),
            wv: Param::uniform(format!("{name}.wv"), &[d, d], bound, rng),
            wo: Param::uniform(format!("{name}.wo"), &[d, d], bound, rng),
            cache: None,
        })
    }

    pub fn config(&self) -> AttentionConfig {
        self.cfg
    }

    fn compute(&self, xt: &[F], len: usize) -> (Vec<F>, Cache<F>) {
        let d = self.cfg.embed_dim;
        let dh = self.cfg.head_dim();
        assert_eq!(xt.len(), d * len, "attention input must be [D, L]");
        let scale = F::lit(1.0 / (dh as f64).sqrt());
        let project = |w: &Param<F>| {
            let mut out = vec![F::zero(); d * len];
            gemm_tn(&w.value, xt, &mut out, d, d, len);
            out
        };
        let (q, k, v) = (project(&self.wq), project(&self.wk), project(&self.wv));
        let mut p = vec![F::zero(); self.cfg.num_heads * len * len];
        let mut o = vec![F::zero(); d * len];
        for h in 0..self.cfg.num_heads {
            let rows = h * dh * len..(h + 1) * dh * len;
            let ph = &mut p[h * len * len..(h + 1) * len * len];
            gemm_tn(&q[rows.clone()], &k[rows.clone()], ph, len, dh, len);
            ph.iter_mut().for_each(|s| *s *= scale);
            softmax_rows(ph, len);
            gemm_nt(&v[rows.clone()], ph, &mut o[rows], dh, len, len);
        }
        let mut y = vec![F::zero(); d * len];
        gemm_tn(&self.wo.value, &o, &mut y, d, d, len);
        (
            y,
            Cache {
                x: xt.to_vec(),
                q,
                k,
                v,
                p,
                o,
                len,
            },
        )
    }

    /// Forward over a channel-first `[D, L]` map, caching for backward.
    pub fn forward(&mut self, xt: &[F], len: usize) -> Vec<F> {
        let (y, cache) = self.compute(xt, len);
        self.cache = Some(cache);
        y
    }

    /// Attention weights of the last forward pass (`heads x L x L`).
    pub fn last_weights(&self) -> Option<&[F]> {
        self.cache.as_ref().map(|c| c.p.as_slice())
    }

    pub fn backward(&mut self, grad: &[F]) -> Vec<F> {
        let c = self.cache.take().expect("attention backward before forward");
        let d = self.cfg.embed_dim;
        let dh = self.cfg.head_dim();
        let len = c.len;
        let scale = F::lit(1.0 / (dh as f64).sqrt());

        gemm_nt(&c.o, grad, &mut self.wo.grad, d, len, d);
        let mut d_o = vec![F::zero(); d * len];
        gemm_nn(&self.wo.value, grad, &mut d_o, d, d, len);

        let mut dq = vec![F::zero(); d * len];
        let mut dk = vec![F::zero(); d * len];
        let mut dv = vec![F::zero(); d * len];
        let mut dp = vec![F::zero(); len * len];
        for h in 0..self.cfg.num_heads {
            let rows = h * dh * len..(h + 1) * dh * len;
            let ph = &c.p[h * len * len..(h + 1) * len * len];
            dp.iter_mut().for_each(|v| *v = F::zero());
            gemm_tn(&d_o[rows.clone()], &c.v[rows.clone()], &mut dp, len, dh, len);
            gemm_nn(&d_o[rows.clone()], ph, &mut dv[rows.clone()], dh, len, len);
            // Softmax Jacobian, then the score scale.
            for (dp_row, p_row) in dp.chunks_exact_mut(len).zip(ph.chunks_exact(len)) {
                let inner = super::linalg::dot(dp_row, p_row);
                for (g, &pv) in dp_row.iter_mut().zip(p_row) {
                    *g = pv * (*g - inner) * scale;
                }
            }
            gemm_nt(&c.k[rows.clone()], &dp, &mut dq[rows.clone()], dh, len, len);
            gemm_nn(&c.q[rows.clone()], &dp, &mut dk[rows], dh, len, len);
        }

        let mut dx = vec![F::zero(); d * len];
        for (w, g) in [(&mut self.wq, &dq), (&mut self.wk, &dk), (&mut self.wv, &dv)] {
            gemm_nt(&c.x, g, &mut w.grad, d, len, d);
            gemm_nn(&w.value, g, &mut dx, d, d, len);
        }
        dx
    }
}

impl<F: Real> Module<F> for SelfAttention<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.wq);
        f(&self.wk);
        f(&self.wv);
        f(&self.wo);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.wq);
        f(&mut self.wk);
        f(&mut self.wv);
        f(&mut self.wo);
    }
}

/// `softmax(Q K^T / sqrt(d_head)) V` per head, heads concatenated, output
/// projection applied, for `x` of shape `[B, L, D]`.
pub fn attention_forward<F: Real>(x: &Tensor<F>, attn: &SelfAttention<F>) -> Result<Tensor<F>, NnError> {
    let &[b, l, d] = x.shape() else {
        return Err(NnError::Shape(format!("attention expects [B,L,D], got {:?}", x.shape())));
    };
    if d != attn.cfg.embed_dim {
        return Err(NnError::Shape(format!(
            "embedding width {d} does not match configured {}",
            attn.cfg.embed_dim
        )));
    }
    let mut out = Vec::with_capacity(b * l * d);
    for bi in 0..b {
        let xt = transpose(x.outer(bi), l, d);
        let (yt, _) = attn.compute(&xt, l);
        out.extend(transpose(&yt, d, l));
    }
    Tensor::from_vec(&[b, l, d], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        use rand::Rng as _;
        let mut rng = rng_from(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct row-major evaluation: x W_V W_out when every weight is uniform.
    fn xw(x: &[f64], w: &[f64], l: usize, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; l * d];
        for i in 0..l {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|p| x[i * d + p] * w[p * d + j]).sum();
            }
        }
        out
    }

    #[test]
    fn single_position_collapses_to_value_path() {
        let mut rng = rng_from(4);
        let attn = SelfAttention::<f64>::new("a", AttentionConfig::single_head(6), &mut rng).unwrap();
        let x = rand_tensor(&[3, 1, 6], 1);
        let y = attention_forward(&x, &attn).unwrap();
        for b in 0..3 {
            let want = xw(&xw(x.outer(b), &attn.wv.value, 1, 6), &attn.wo.value, 1, 6);
            for (p, q) in y.outer(b).iter().zip(&want) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_query_key_gives_uniform_average() {
        let mut rng = rng_from(5);
        let mut attn = SelfAttention::<f64>::new("a", AttentionConfig { embed_dim: 4, num_heads: 2 }, &mut rng).unwrap();
        attn.wq.value.fill(0.0);
        attn.wk.value.fill(0.0);
        let (l, d) = (7, 4);
        let x = rand_tensor(&[1, l, d], 2);
        let y = attention_forward(&x, &attn).unwrap();
        let xv = xw(x.outer(0), &attn.wv.value, l, d);
        let mean: Vec<f64> = (0..d).map(|j| (0..l).map(|i| xv[i * d + j]).sum::<f64>() / l as f64).collect();
        let want = xw(&mean, &attn.wo.value, 1, d);
        for i in 0..l {
            for j in 0..d {
                assert!((y.outer(0)[i * d + j] - want[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = rng_from(6);
        let attn = SelfAttention::<f64>::new("a", AttentionConfig::single_head(5), &mut rng).unwrap();
        let (l, d) = (6, 5);
        let x = rand_tensor(&[1, l, d], 3);
        let perm = [3, 0, 5, 1, 4, 2];
        let px: Vec<f64> = perm.iter().flat_map(|&i| x.outer(0)[i * d..(i + 1) * d].to_vec()).collect();
        let y = attention_forward(&x, &attn).unwrap();
        let py = attention_forward(&Tensor::from_vec(&[1, l, d], px).unwrap(), &attn).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for j in 0..d {
                assert!((py.data()[k * d + j] - y.data()[i * d + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_value_path_stays_in_convex_hull() {
        let mut rng = rng_from(7);
        let (l, d) = (9, 3);
        let mut attn = SelfAttention::<f64>::new("a", AttentionConfig::single_head(d), &mut rng).unwrap();
        for w in [&mut attn.wv, &mut attn.wo] {
            w.value.fill(0.0);
            for i in 0..d {
                w.value[i * d + i] = 1.0;
            }
        }
        let x = rand_tensor(&[1, l, d], 4);
        let y = attention_forward(&x, &attn).unwrap();
        for j in 0..d {
            let col: Vec<f64> = (0..l).map(|i| x.data()[i * d + j]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for i in 0..l {
                let v = y.data()[i * d + j];
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(AttentionConfig { embed_dim: 6, num_heads: 4 }.validate().is_err());
        assert!(AttentionConfig { embed_dim: 8, num_heads: 4 }.validate().is_ok());
        let mut rng = rng_from(0);
        let attn = SelfAttention::<f64>::new("a", AttentionConfig::single_head(4), &mut rng).unwrap();
        assert!(attention_forward(&Tensor::zeros(&[1, 3, 5]), &attn).is_err());
    }
}
