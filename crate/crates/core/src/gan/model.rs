use crate::channel::{CarrierBand, Mobility, ScenarioClass, GRID_LEN, N_ANT, N_SC};
use crate::nn::{AvgPool2, Conv2d, ConvTranspose2x2, LeakyRelu, Linear, Module, Param, Real, Tensor};
use crate::rng::Rng;

/// Band one-hot (2) followed by mobility one-hot (3).
pub const COND_DIM: usize = 5;
const SLOPE: f64 = 0.2;
const PLANES: usize = 2 * GRID_LEN;

pub fn condition_vector<F: Real>(scenario: ScenarioClass) -> [F; COND_DIM] {
    let mut c = [F::zero(); COND_DIM];
    let b = CarrierBand::ALL.iter().position(|&b| b == scenario.band).unwrap();
    let m = Mobility::ALL.iter().position(|&m| m == scenario.mobility).unwrap();
    c[b] = F::one();
    c[2 + m] = F::one();
    c
}

/// Unitary DFT along the subcarrier axis of channel-first `[re, im]` planes.
/// `inverse` applies the adjoint, which is also the gradient map.
fn dft_rows<F: Real>(planes: &[F], inverse: bool) -> Vec<F> {
    use std::f64::consts::TAU;
    let sign = if inverse { 1.0 } else { -1.0 };
    let norm = 1.0 / (N_SC as f64).sqrt();
    let twiddle: Vec<(F, F)> = (0..N_SC)
        .map(|m| {
            let a = sign * TAU * m as f64 / N_SC as f64;
            (F::lit(a.cos() * norm), F::lit(a.sin() * norm))
        })
        .collect();
    let (re, im) = planes.split_at(GRID_LEN);
    let mut out = vec![F::zero(); PLANES];
    for a in 0..N_ANT {
        let row = a * N_SC;
        for k in 0..N_SC {
            let (mut sr, mut si) = (F::zero(), F::zero());
            for tau in 0..N_SC {
                let (c, s) = twiddle[(k * tau) % N_SC];
                let (xr, xi) = (re[row + tau], im[row + tau]);
                sr += xr * c - xi * s;
                si += xr * s + xi * c;
            }
            out[row + k] = sr;
            out[GRID_LEN + row + k] = si;
        }
    }
    out
}

/// `(z, condition)` -> dense -> `[C, 1, 4]` -> three 2x2 transposed convs
/// -> 3x3 conv to antenna x delay-tap planes `[2, 8, 32]` -> fixed DFT over
/// taps -> unit mean power per complex entry.
///
/// Generating taps rather than subcarriers lets the dense layer place energy
/// at short delays directly; upsampling artefacts then stay in the delay
/// domain instead of appearing as spurious long-delay energy.
#[derive(Debug, Clone)]
pub struct Generator<F> {
    latent_dim: usize,
    channels: usize,
    fc: Linear<F>,
    act_fc: LeakyRelu<F>,
    ups: Vec<(ConvTranspose2x2<F>, LeakyRelu<F>)>,
    out: Conv2d<F>,
    /// Learned per-tap gain applied before the DFT.
    envelope: Param<F>,
    norm_cache: Option<(Vec<F>, F)>,
    taps_cache: Vec<F>,
}

impl<F: Real> Generator<F> {
    pub fn new(latent_dim: usize, channels: usize, rng: &mut Rng) -> Self {
        let c = channels;
        Self {
            latent_dim,
            channels,
            fc: Linear::new("gen.fc", latent_dim + COND_DIM, c * 4, rng),
            act_fc: LeakyRelu::new(SLOPE),
            ups: (0..3)
                .map(|i| (ConvTranspose2x2::new(&format!("gen.up{i}"), c, c, rng), LeakyRelu::new(SLOPE)))
                .collect(),
            out: Conv2d::new("gen.out", c, 2, rng),
            envelope: {
                let mut p = Param::zeros("gen.envelope", &[N_SC]);
                p.value.iter_mut().for_each(|v| *v = F::one());
                p
            },
            norm_cache: None,
            taps_cache: Vec::new(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Returns channel-first planes `[re, im]`, normalised to unit mean power.
    pub fn forward(&mut self, z: &[F], cond: &[F; COND_DIM]) -> Vec<F> {
        assert_eq!(z.len(), self.latent_dim, "latent size");
        let mut input = z.to_vec();
        input.extend_from_slice(cond);
        let h = self.fc.forward(&input);
        let h = self.act_fc.forward(&h);
        let mut t = Tensor::from_vec(&[self.channels, 1, 4], h).unwrap();
        for (up, act) in &mut self.ups {
            let u = up.forward(&t);
            let shape = u.shape().to_vec();
            t = Tensor::from_vec(&shape, act.forward(u.data())).unwrap();
        }
        let taps = self.out.forward(&t).into_data();
        let shaped: Vec<F> = taps
            .iter()
            .enumerate()
            .map(|(i, v)| *v * self.envelope.value[i % N_SC])
            .collect();
        self.taps_cache = taps;
        let x = dft_rows(&shaped, false);
        // Mean power over complex entries: sum of squares / GRID_LEN.
        let power = x.iter().map(|v| *v * *v).sum::<F>() / F::lit(GRID_LEN as f64);
        let r = (power + F::lit(1e-12)).sqrt();
        let y: Vec<F> = x.iter().map(|v| *v / r).collect();
        self.norm_cache = Some((y.clone(), r));
        y
    }

    pub fn backward(&mut self, grad: &[F]) {
        let (y, r) = self.norm_cache.take().expect("generator backward before forward");
        let n = F::lit(GRID_LEN as f64);
        let yg = y.iter().zip(grad).map(|(a, b)| *a * *b).sum::<F>();
        let gx: Vec<F> = y.iter().zip(grad).map(|(yv, g)| (*g - *yv * yg / n) / r).collect();
        let gs = dft_rows(&gx, true);
        let mut gt = vec![F::zero(); PLANES];
        for (i, (g, x)) in gs.iter().zip(&self.taps_cache).enumerate() {
            self.envelope.grad[i % N_SC] += *g * *x;
            gt[i] = *g * self.envelope.value[i % N_SC];
        }
        let mut g = self.out.backward(&Tensor::from_vec(&[2, N_ANT, N_SC], gt).unwrap());
        for (up, act) in self.ups.iter_mut().rev() {
            let shape = g.shape().to_vec();
            let ga = Tensor::from_vec(&shape, act.backward(g.data())).unwrap();
            g = up.backward(&ga);
        }
        let g = self.act_fc.backward(g.data());
        self.fc.backward(&g);
    }
}

impl<F: Real> Module<F> for Generator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        self.fc.visit(f);
        for (up, _) in &self.ups {
            up.visit(f);
        }
        self.out.visit(f);
        f(&self.envelope);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.fc.visit_mut(f);
        for (up, _) in &mut self.ups {
            up.visit_mut(f);
        }
        self.out.visit_mut(f);
        f(&mut self.envelope);
    }
}

#[derive(Debug, Clone)]
struct DownBlock<F> {
    conv: Conv2d<F>,
    act: LeakyRelu<F>,
    pool: AvgPool2,
}

/// Three (3x3 conv, LeakyReLU, 2x2 average pool) blocks, then a dense layer on
/// the flattened features concatenated with the condition. Outputs a logit.
///
/// The input is seen both per subcarrier and per delay tap (four planes), so
/// long-delay energy is as visible as local frequency structure.
#[derive(Debug, Clone)]
pub struct Discriminator<F> {
    channels: usize,
    blocks: Vec<DownBlock<F>>,
    fc: Linear<F>,
}

impl<F: Real> Discriminator<F> {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        let c = channels;
        Self {
            channels,
            blocks: (0..3)
                .map(|i| DownBlock {
                    conv: Conv2d::new(&format!("disc.conv{i}"), if i == 0 { 4 } else { c }, c, rng),
                    act: LeakyRelu::new(SLOPE),
                    pool: AvgPool2::default(),
                })
                .collect(),
            fc: Linear::new("disc.fc", c * 4 + COND_DIM, 1, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&mut self, planes: &[F], cond: &[F; COND_DIM]) -> F {
        assert_eq!(planes.len(), PLANES, "discriminator input must be [2, 8, 32]");
        let mut input = planes.to_vec();
        input.extend(dft_rows(planes, true));
        let mut t = Tensor::from_vec(&[4, N_ANT, N_SC], input).unwrap();
        for b in &mut self.blocks {
            let h = b.conv.forward(&t);
            let shape = h.shape().to_vec();
            let h = Tensor::from_vec(&shape, b.act.forward(h.data())).unwrap();
            t = b.pool.forward(&h);
        }
        let mut feat = t.into_data();
        feat.extend_from_slice(cond);
        self.fc.forward(&feat)[0]
    }

    /// Backpropagates `d loss / d logit`; returns the gradient w.r.t. the input planes.
    pub fn backward(&mut self, grad_logit: F) -> Vec<F> {
        let g = self.fc.backward(&[grad_logit]);
        let c = self.channels;
        let mut g = Tensor::from_vec(&[c, 1, 4], g[..c * 4].to_vec()).unwrap();
        for b in self.blocks.iter_mut().rev() {
            let gp = b.pool.backward(&g);
            let shape = gp.shape().to_vec();
            let ga = Tensor::from_vec(&shape, b.act.backward(gp.data())).unwrap();
            g = b.conv.backward(&ga);
        }
        let g = g.into_data();
        let (direct, delay) = g.split_at(PLANES);
        direct
            .iter()
            .zip(dft_rows(delay, false))
            .map(|(a, b)| *a + b)
            .collect()
    }
}

impl<F: Real> Module<F> for Discriminator<F> {
    fn visit(&self, f: &mut dyn FnMut(&Param<F>)) {
        for b in &self.blocks {
            b.conv.visit(f);
        }
        self.fc.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        for b in &mut self.blocks {
            b.conv.visit_mut(f);
        }
        self.fc.visit_mut(f);
    }
}
