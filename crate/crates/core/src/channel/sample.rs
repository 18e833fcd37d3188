use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioClass;

/// Receive antennas.
pub const N_ANT: usize = 8;
/// OFDM subcarriers.
pub const N_SC: usize = 32;
/// Complex entries per channel matrix.
pub const GRID_LEN: usize = N_ANT * N_SC;
pub const SUBCARRIER_SPACING_HZ: f64 = 312_500.0;
/// Duration of one delay tap of the subcarrier-axis IDFT: 1 / (N_sc * subcarrier spacing).
pub const TAP_DURATION_S: f64 = 1.0 / (N_SC as f64 * SUBCARRIER_SPACING_HZ);

/// Complex channel gains over the antenna x subcarrier grid, row-major by antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    data: Vec<Complex32>,
}

impl ChannelMatrix {
    pub fn zeros() -> Self {
        Self {
            data: vec![Complex32::new(0.0, 0.0); GRID_LEN],
        }
    }

    /// Panics unless `data.len() == N_ANT * N_SC`.
    pub fn from_vec(data: Vec<Complex32>) -> Self {
        assert_eq!(data.len(), GRID_LEN, "channel matrix must be {N_ANT}x{N_SC}");
        Self { data }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex32) -> Self {
        let mut data = Vec::with_capacity(GRID_LEN);
        for a in 0..N_ANT {
            for s in 0..N_SC {
                data.push(f(a, s));
            }
        }
        Self { data }
    }

    pub fn get(&self, antenna: usize, subcarrier: usize) -> Complex32 {
        self.data[antenna * N_SC + subcarrier]
    }

    pub fn set(&mut self, antenna: usize, subcarrier: usize, v: Complex32) {
        self.data[antenna * N_SC + subcarrier] = v;
    }

    pub fn as_slice(&self) -> &[Complex32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    pub fn row(&self, antenna: usize) -> &[Complex32] {
        &self.data[antenna * N_SC..(antenna + 1) * N_SC]
    }

    /// Sum of |h|^2 over the grid, accumulated in f64.
    pub fn total_power(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr() as f64).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.total_power() / GRID_LEN as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            data: self.data.iter().map(|c| c * factor).collect(),
        }
    }

    /// Rescales to unit mean per-entry power. Zero matrices are returned unchanged.
    pub fn normalized(&self) -> Self {
        let p = self.mean_power();
        if p <= 0.0 || !p.is_finite() {
            return self.clone();
        }
        let k = 1.0 / p.sqrt();
        Self {
            data: self
                .data
                .iter()
                .map(|c| Complex32::new((c.re as f64 * k) as f32, (c.im as f64 * k) as f32))
                .collect(),
        }
    }

    /// Channel-first real planes `[re plane, im plane]`, each `N_ANT x N_SC`.
    pub fn to_planes(&self) -> Vec<f32> {
        let mut out = vec![0.0; 2 * GRID_LEN];
        for (i, c) in self.data.iter().enumerate() {
            out[i] = c.re;
            out[GRID_LEN + i] = c.im;
        }
        out
    }

    pub fn from_planes(planes: &[f32]) -> Self {
        assert_eq!(planes.len(), 2 * GRID_LEN);
        Self {
            data: (0..GRID_LEN)
                .map(|i| Complex32::new(planes[i], planes[GRID_LEN + i]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Simulated,
    GanSynthetic,
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    Noise,
    TimeShift,
    FreqOffset,
}

/// A channel realisation and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: ChannelMatrix,
    pub scenario: ScenarioClass,
    pub seed: u64,
    pub origin: Origin,
    /// Set when a classic augmentation produced this sample.
    pub augmented: Option<AugmentKind>,
    /// Hex digest of the generator checkpoint for GAN-synthesised samples.
    pub generator: Option<String>,
}

impl ChannelSample {
    pub fn new(h: ChannelMatrix, scenario: ScenarioClass, seed: u64, origin: Origin) -> Self {
        Self {
            h,
            scenario,
            seed,
            origin,
            augmented: None,
            generator: None,
        }
    }
}
