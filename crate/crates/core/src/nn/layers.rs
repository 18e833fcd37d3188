use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::{Module, NnError, Param, Real, Tensor};
use crate::rng::Rng;

fn im2col<F: Real>(x: &[F], c: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let mut col = vec![F::zero(); c * 9 * hw];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let x_lo = if kx == 0 { 1 } else { 0 };
                    let x_hi = if kx == 2 { w - 1 } else { w };
                    for xo in x_lo..x_hi {
                        row[y * w + xo] = x[ci * hw + iy * w + xo + kx - 1];
                    }
                }
            }
        }
    }
    col
}

fn col2im<F: Real>(col: &[F], c: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let mut x = vec![F::zero(); c * hw];
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let x_lo = if kx == 0 { 1 } else { 0 };
                    let x_hi = if kx == 2 { w - 1 } else { w };
                    for xo in x_lo..x_hi {
                        x[ci * hw + iy * w + xo + kx - 1] += row[y * w + xo];
                    }
                }
            }
        }
    }
    x
}

/// 3x3 cross-correlation, stride 1, zero padding 1 over a batch.
///
/// `x` is `[B, C, H, W]`, `kernel` is `[C', C, 3, 3]`, `bias` has `C'` entries.
pub fn conv2d_forward<F: Real>(x: &Tensor<F>, kernel: &Tensor<F>, bias: &[F]) -> Result<Tensor<F>, NnError> {
    let (&[b, c, h, w], &[co, ck, 3, 3]) = (x.shape(), kernel.shape()) else {
        return Err(NnError::Shape(format!(
            "conv2d expects [B,C,H,W] and [C',C,3,3], got {:?} and {:?}",
            x.shape(),
            kernel.shape()
        )));
    };
    if ck != c || bias.len() != co {
        return Err(NnError::Shape(format!(
            "input has {c} channels, kernel expects {ck}; bias has {} for {co} outputs",
            bias.len()
        )));
    }
    let hw = h * w;
    let mut out = Tensor::zeros(&[b, co, h, w]);
    for bi in 0..b {
        let col = im2col(x.outer(bi), c, h, w);
        let dst = &mut out.data_mut()[bi * co * hw..(bi + 1) * co * hw];
        for (o, bv) in bias.iter().enumerate() {
            dst[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = *bv);
        }
        gemm_nn(kernel.data(), &col, dst, co, c * 9, hw);
    }
    Ok(out)
}

/// 3x3 same-padding convolution over one `[C, H, W]` feature map.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    c_in: usize,
    c_out: usize,
    cache: Option<(Vec<F>, usize, usize)>,
}

impl<F: Real> Conv2d<F> {
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / ((c_in * 9) as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[c_out, c_in, 3, 3], bound, rng),
            bias: Param::uniform(format!("{name}.bias"), &[c_out], bound, rng),
            c_in,
            c_out,
            cache: None,
        }
    }

    /// Zero-initialised variant, used for output heads.
    pub fn zeroed(name: &str, c_in: usize, c_out: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), &[c_out, c_in, 3, 3]),
            bias: Param::zeros(format!("{name}.bias"), &[c_out]),
            c_in,
            c_out,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let &[c, h, w] = x.shape() else {
            panic!("conv input must be [C,H,W], got {:?}", x.shape())
        };
        assert_eq!(c, self.c_in, "conv input channels");
        let hw = h * w;
        let col = im2col(x.data(), c, h, w);
        let mut out = vec![F::zero(); self.c_out * hw];
        for (o, bv) in self.bias.value.iter().enumerate() {
            out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = *bv);
        }
        gemm_nn(&self.weight.value, &col, &mut out, self.c_out, c * 9, hw);
        self.cache = Some((col, h, w));
        Tensor::from_vec(&[self.c_out, h, w], out).unwrap()
    }

    pub fn backward(&mut self, grad: &Tensor<F>) -> Tensor<F> {
        let (col, h, w) = self.cache.as_ref().expect("conv backward before forward");
        let (h, w) = (*h, *w);
        let hw = h * w;
        let k = self.c_in * 9;
        let g = grad.data();
        gemm_nt(g, col, &mut self.weight.grad, self.c_out, hw, k);
        for o in 0..self.c_out {
            self.bias.grad[o] += g[o * hw..(o + 1) * hw].iter().copied().sum::<F>();
        }
        let mut dcol = vec![F::zero(); k * hw];
        gemm_tn(&self.weight.value, g, &mut dcol, k, self.c_out, hw);
        Tensor::from_vec(&[self.c_in, h, w], col2im(&dcol, self.c_in, h, w)).unwrap()
    }
}

impl<F: Real> Module<F> for Conv2d<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Transposed convolution with a 2x2 kernel and stride 2: doubles H and W.
#[derive(Debug, Clone)]
pub struct ConvTranspose2x2<F> {
    /// `[C_in, C_out, 2, 2]`
    pub weight: Param<F>,
    pub bias: Param<F>,
    c_in: usize,
    c_out: usize,
    cache: Option<Tensor<F>>,
}

impl<F: Real> ConvTranspose2x2<F> {
    /// He-style initialisation: each output sees exactly `c_in` inputs, so
    /// the usual `1/sqrt(fan)` bound would shrink the signal ~12x per layer.
    pub fn new(name: &str, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / c_in as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[c_in, c_out, 2, 2], bound, rng),
            bias: Param::zeros(format!("{name}.bias"), &[c_out]),
            c_in,
            c_out,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let &[c, h, w] = x.shape() else {
            panic!("transposed conv input must be [C,H,W]")
        };
        assert_eq!(c, self.c_in);
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![F::zero(); self.c_out * oh * ow];
        for co in 0..self.c_out {
            out[co * oh * ow..(co + 1) * oh * ow]
                .iter_mut()
                .for_each(|v| *v = self.bias.value[co]);
        }
        let xd = x.data();
        for ci in 0..c {
            for co in 0..self.c_out {
                let wk = &self.weight.value[(ci * self.c_out + co) * 4..][..4];
                for y in 0..h {
                    for xx in 0..w {
                        let v = xd[(ci * h + y) * w + xx];
                        for dy in 0..2 {
                            for dx in 0..2 {
                                out[(co * oh + 2 * y + dy) * ow + 2 * xx + dx] += v * wk[dy * 2 + dx];
                            }
                        }
                    }
                }
            }
        }
        self.cache = Some(x.clone());
        Tensor::from_vec(&[self.c_out, oh, ow], out).unwrap()
    }

    pub fn backward(&mut self, grad: &Tensor<F>) -> Tensor<F> {
        let x = self.cache.as_ref().expect("transposed conv backward before forward");
        let &[c, h, w] = x.shape() else { unreachable!() };
        let (oh, ow) = (2 * h, 2 * w);
        let g = grad.data();
        let xd = x.data();
        for co in 0..self.c_out {
            self.bias.grad[co] += g[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum::<F>();
        }
        let mut dx = vec![F::zero(); c * h * w];
        for ci in 0..c {
            for co in 0..self.c_out {
                let base = (ci * self.c_out + co) * 4;
                for y in 0..h {
                    for xx in 0..w {
                        let v = xd[(ci * h + y) * w + xx];
                        let mut acc = F::zero();
                        for dy in 0..2 {
                            for dx_ in 0..2 {
                                let gv = g[(co * oh + 2 * y + dy) * ow + 2 * xx + dx_];
                                self.weight.grad[base + dy * 2 + dx_] += v * gv;
                                acc += self.weight.value[base + dy * 2 + dx_] * gv;
                            }
                        }
                        dx[(ci * h + y) * w + xx] += acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[c, h, w], dx).unwrap()
    }
}

impl<F: Real> Module<F> for ConvTranspose2x2<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// 2x2 average pooling, stride 2.
#[derive(Debug, Clone, Default)]
pub struct AvgPool2 {
    shape: Option<[usize; 3]>,
}

impl AvgPool2 {
    pub fn forward<F: Real>(&mut self, x: &Tensor<F>) -> Tensor<F> {
        let &[c, h, w] = x.shape() else {
            panic!("pool input must be [C,H,W]")
        };
        let (oh, ow) = (h / 2, w / 2);
        let quarter = F::lit(0.25);
        let xd = x.data();
        let mut out = vec![F::zero(); c * oh * ow];
        for ci in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let at = |dy: usize, dx: usize| xd[(ci * h + 2 * y + dy) * w + 2 * xx + dx];
                    out[(ci * oh + y) * ow + xx] = (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * quarter;
                }
            }
        }
        self.shape = Some([c, h, w]);
        Tensor::from_vec(&[c, oh, ow], out).unwrap()
    }

    pub fn backward<F: Real>(&mut self, grad: &Tensor<F>) -> Tensor<F> {
        let [c, h, w] = self.shape.expect("pool backward before forward");
        let (oh, ow) = (h / 2, w / 2);
        let quarter = F::lit(0.25);
        let g = grad.data();
        let mut dx = vec![F::zero(); c * h * w];
        for ci in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let v = g[(ci * oh + y) * ow + xx] * quarter;
                    for dy in 0..2 {
                        for d in 0..2 {
                            dx[(ci * h + 2 * y + dy) * w + 2 * xx + d] = v;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[c, h, w], dx).unwrap()
    }
}

/// Dense layer `y = W x + b` on a flat vector.
#[derive(Debug, Clone)]
pub struct Linear<F> {
    /// `[out, in]`
    pub weight: Param<F>,
    pub bias: Param<F>,
    cache: Option<Vec<F>>,
}

impl<F: Real> Linear<F> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[d_out, d_in], bound, rng),
            bias: Param::uniform(format!("{name}.bias"), &[d_out], bound, rng),
            cache: None,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&mut self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.d_in(), "linear input width");
        let mut out = self.bias.value.clone();
        gemm_nn(&self.weight.value, x, &mut out, self.d_out(), self.d_in(), 1);
        self.cache = Some(x.to_vec());
        out
    }

    pub fn backward(&mut self, grad: &[F]) -> Vec<F> {
        let x = self.cache.as_ref().expect("linear backward before forward");
        let (d_out, d_in) = (self.d_out(), self.d_in());
        for o in 0..d_out {
            self.bias.grad[o] += grad[o];
            super::linalg::axpy(grad[o], x, &mut self.weight.grad[o * d_in..(o + 1) * d_in]);
        }
        let mut dx = vec![F::zero(); d_in];
        gemm_tn(&self.weight.value, grad, &mut dx, d_in, d_out, 1);
        dx
    }
}

impl<F: Real> Module<F> for Linear<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `x * sigmoid(x)`
#[derive(Debug, Clone, Default)]
pub struct Silu<F> {
    cache: Vec<F>,
}

impl<F: Real> Silu<F> {
    pub fn forward(&mut self, x: &[F]) -> Vec<F> {
        self.cache = x.to_vec();
        x.iter().map(|&v| v * sigmoid(v)).collect()
    }

    pub fn backward(&self, grad: &[F]) -> Vec<F> {
        self.cache
            .iter()
            .zip(grad)
            .map(|(&x, &g)| {
                let s = sigmoid(x);
                g * s * (F::one() + x * (F::one() - s))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu<F> {
    slope: F,
    cache: Vec<F>,
}

impl<F: Real> LeakyRelu<F> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: F::lit(slope),
            cache: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &[F]) -> Vec<F> {
        self.cache = x.to_vec();
        x.iter()
            .map(|&v| if v > F::zero() { v } else { v * self.slope })
            .collect()
    }

    pub fn backward(&self, grad: &[F]) -> Vec<F> {
        self.cache
            .iter()
            .zip(grad)
            .map(|(&x, &g)| if x > F::zero() { g } else { g * self.slope })
            .collect()
    }
}

/// Sinusoidal embedding of a (diffusion) step: `dim/2` sines then `dim/2` cosines
/// at geometrically spaced frequencies.
pub fn sinusoidal_embedding<F: Real>(t: f64, dim: usize) -> Vec<F> {
    let half = dim / 2;
    let mut out = vec![F::zero(); dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        out[i] = F::lit((t * freq).sin());
        out[half + i] = F::lit((t * freq).cos());
    }
    out
}
