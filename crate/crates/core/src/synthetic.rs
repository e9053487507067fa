//! Synthetic hyperspectral scenes with known abundances.
//!
//! The default scene is a 10×14 image (140 pixels) of four materials laid out
//! as adjacent vertical bands of widths 2, 3, 4 and 5 columns, observed in 20
//! wavelengths. Signatures are phase-shifted sinusoids lifted by 1.1. Noise is
//! a dense Gaussian field plus a fixed number of large sparse outliers, both
//! scaled by the mean of the clean data.
//!
//! Rows are pixels, columns are wavelengths.

use std::f64::consts::PI;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::grid::GridShape;
use crate::linalg::DenseMatrix;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub grid: GridShape,
    pub n_wavelengths: usize,
    pub r: usize,
    /// Gaussian noise intensity.
    pub g: f64,
    /// Fraction of entries hit by salt-and-pepper noise.
    pub p: f64,
    pub seed: u64,
    /// 1-based material order: row `k` of `V` is the signature of material `permutation[k]`.
    pub permutation: Vec<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            grid: GridShape::new(10, 14).expect("valid"),
            n_wavelengths: 20,
            r: 4,
            g: 0.0,
            p: 0.0,
            seed: 0,
            permutation: vec![1, 3, 2, 4],
        }
    }
}

impl SyntheticSpec {
    pub fn with_noise(g: f64, p: f64, seed: u64) -> Self {
        SyntheticSpec {
            g,
            p,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(PnmuError::parameter(format!(
                "salt-and-pepper density must lie in [0, 1], got {}",
                self.p
            )));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(PnmuError::parameter(format!(
                "Gaussian intensity must be nonnegative, got {}",
                self.g
            )));
        }
        if self.r == 0 || self.n_wavelengths == 0 {
            return Err(PnmuError::parameter("r and n_wavelengths must be positive"));
        }
        let mut sorted = self.permutation.clone();
        sorted.sort_unstable();
        if sorted != (1..=self.r).collect::<Vec<_>>() {
            return Err(PnmuError::parameter(format!(
                "{:?} is not a permutation of 1..={}",
                self.permutation, self.r
            )));
        }
        Ok(())
    }
}

/// Scene data together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub m_noisy: DenseMatrix,
    pub u_true: DenseMatrix,
    pub v_true: DenseMatrix,
    /// Mean entry of the clean product `U_true · V_true`.
    pub m_bar: f64,
}

/// Binary abundances: material `k` (1-based) covers `10(k+1)` consecutive
/// pixels starting right after material `k−1`.
///
/// For the default 140-pixel scene this is pixels
/// `5(k−1)(k+2)+1 ..= 5(k−1)(k+2)+10(k+1)`.
pub fn ground_truth_u(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    let n = spec.grid.n_pixels();
    let total: usize = (1..=spec.r).map(|k| 10 * (k + 1)).sum();
    if total != n {
        return Err(PnmuError::parameter(format!(
            "{} material blocks of 10(k+1) pixels cover {} pixels, the grid has {}",
            spec.r, total, n
        )));
    }
    let mut u = DenseMatrix::zeros(n, spec.r);
    let mut start = 0;
    for k in 1..=spec.r {
        let len = 10 * (k + 1);
        for i in start..start + len {
            u.set(i, k - 1, 1.0);
        }
        start += len;
    }
    Ok(u)
}

/// Signatures `1.1 + sin(j·2π/n + (k−1)·2π/r)`, rows reordered by the permutation.
pub fn ground_truth_v(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let n = spec.n_wavelengths;
    let mut v = DenseMatrix::zeros(spec.r, n);
    for (row, &material) in spec.permutation.iter().enumerate() {
        let phase = (material - 1) as f64 * 2.0 * PI / spec.r as f64;
        for j in 1..=n {
            let x = j as f64 * 2.0 * PI / n as f64;
            v.set(row, j - 1, 1.1 + (x + phase).sin());
        }
    }
    Ok(v)
}

/// Adds `g·m̄·N(0,1)` to every entry and `m̄·N(0,1)` to exactly
/// `round(p·n·m)` distinct entries. The result is not clipped.
pub fn add_noise(
    clean: &DenseMatrix,
    m_bar: f64,
    g: f64,
    p: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PnmuError::parameter(format!(
            "salt-and-pepper density must lie in [0, 1], got {p}"
        )));
    }
    if !(g >= 0.0 && g.is_finite()) {
        return Err(PnmuError::parameter(format!(
            "Gaussian intensity must be nonnegative, got {g}"
        )));
    }
    let mut out = clean.clone();
    let len = out.as_slice().len();
    if g > 0.0 {
        let mut rng = rng::stream(seed, streams::NOISE_GAUSSIAN);
        for v in out.as_mut_slice().iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += g * m_bar * z;
        }
    }
    let count = (p * len as f64).round() as usize;
    if count > 0 {
        let mut pos_rng = rng::stream(seed, streams::NOISE_POSITIONS);
        let mut positions = index::sample(&mut pos_rng, len, count).into_vec();
        positions.sort_unstable();
        let mut val_rng = rng::stream(seed, streams::NOISE_VALUES);
        let data = out.as_mut_slice();
        for pos in positions {
            let z: f64 = StandardNormal.sample(&mut val_rng);
            data[pos] += m_bar * z;
        }
    }
    Ok(out)
}

/// Builds `M = U V + G + P` for the given settings.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let u_true = ground_truth_u(spec)?;
    let v_true = ground_truth_v(spec)?;
    let clean = u_true.matmul(&v_true)?;
    let m_bar = clean.mean();
    let m_noisy = add_noise(&clean, m_bar, spec.g, spec.p, spec.seed)?;
    Ok(SyntheticInstance {
        m_noisy,
        u_true,
        v_true,
        m_bar,
    })
}
