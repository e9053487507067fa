//! Pixel-grid adjacency and the anisotropic total-variation machinery.
//!
//! Pixels are indexed column-major: linear index `p` (0-based) sits at row
//! `p % height`, column `p / height`. Each unordered 4-adjacent pair is stored
//! once as a row of the signed incidence matrix `N` (`+1` at the smaller
//! index, `−1` at the larger), so `‖N u‖₁` sums `|u_i − u_j|` over pairs.
//!
//! The ℓ1 term is smoothed by iteratively reweighted least squares:
//! `‖N u‖₁ ≈ uᵀ B u` with `B = (W N)ᵀ (W N)` and
//! `w_k = (|N u_prev|_k + ε)^(−1/2)`. `B` is only ever applied, never formed.

use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::linalg::DenseVector;

/// Image height × width in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    height: usize,
    width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(PnmuError::parameter(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(GridShape { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    /// (row, col) of a 0-based linear pixel index.
    pub fn position(&self, pixel: usize) -> (usize, usize) {
        (pixel % self.height, pixel / self.height)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        col * self.height + row
    }
}

/// The incidence structure `N` as a list of 0-based pixel pairs `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborMatrix {
    n_pixels: usize,
    pairs: Vec<(usize, usize)>,
}

impl NeighborMatrix {
    /// Enumerates every 4-adjacent pair once, sorted by `(i, j)`.
    pub fn build(shape: GridShape) -> Self {
        let h = shape.height();
        let n = shape.n_pixels();
        let mut pairs = Vec::with_capacity(h * (shape.width() - 1) + shape.width() * (h - 1));
        for p in 0..n {
            let (row, _) = shape.position(p);
            if row + 1 < h {
                pairs.push((p, p + 1));
            }
            if p + h < n {
                pairs.push((p, p + h));
            }
        }
        NeighborMatrix { n_pixels: n, pairs }
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    /// Number of neighboring pairs `K`.
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_pixels {
            return Err(PnmuError::shape(format!(
                "vector of length {len} on a grid of {} pixels",
                self.n_pixels
            )));
        }
        Ok(())
    }

    /// `N u`, one signed difference per pair.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        Ok(self.apply_unchecked(u))
    }

    pub(crate) fn apply_unchecked(&self, u: &[f64]) -> Vec<f64> {
        self.pairs.iter().map(|&(i, j)| u[i] - u[j]).collect()
    }
}

/// `‖N u‖₁` (each unordered pair counted once).
pub fn tv_penalty(nm: &NeighborMatrix, u: &[f64]) -> Result<f64> {
    nm.check_len(u.len())?;
    Ok(nm.pairs.iter().map(|&(i, j)| (u[i] - u[j]).abs()).sum())
}

/// IRWLS weights `w_k = (|N u|_k + ε)^(−1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrwlsWeights {
    w: Vec<f64>,
    epsilon: f64,
}

impl IrwlsWeights {
    pub fn compute(nm: &NeighborMatrix, u: &[f64], epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PnmuError::parameter(format!(
                "IRWLS epsilon must be positive, got {epsilon}"
            )));
        }
        nm.check_len(u.len())?;
        Ok(Self::compute_unchecked(nm, u, epsilon))
    }

    pub(crate) fn compute_unchecked(nm: &NeighborMatrix, u: &[f64], epsilon: f64) -> Self {
        let w = nm
            .pairs
            .iter()
            .map(|&(i, j)| ((u[i] - u[j]).abs() + epsilon).powf(-0.5))
            .collect();
        IrwlsWeights { w, epsilon }
    }

    /// Weights given explicitly, for tests and for callers that manage their own schedule.
    pub fn from_values(w: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(PnmuError::parameter("IRWLS epsilon must be positive"));
        }
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(PnmuError::parameter(
                "IRWLS weights must be finite and positive",
            ));
        }
        Ok(IrwlsWeights { w, epsilon })
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `B x = Nᵀ (w² ⊙ N x)`.
pub fn apply_b(nm: &NeighborMatrix, w: &IrwlsWeights, x: &[f64]) -> Result<DenseVector> {
    nm.check_len(x.len())?;
    if w.w.len() != nm.n_pairs() {
        return Err(PnmuError::shape(format!(
            "{} weights for {} neighbor pairs",
            w.w.len(),
            nm.n_pairs()
        )));
    }
    Ok(apply_b_unchecked(nm, w, x))
}

pub(crate) fn apply_b_unchecked(nm: &NeighborMatrix, w: &IrwlsWeights, x: &[f64]) -> DenseVector {
    let mut out = vec![0.0; nm.n_pixels];
    for (&(i, j), &wk) in nm.pairs.iter().zip(&w.w) {
        let d = wk * wk * (x[i] - x[j]);
        out[i] += d;
        out[j] -= d;
    }
    DenseVector(out)
}

/// Runs `steps` power-method steps on `B` from `z0`.
///
/// Returns the Rayleigh quotient `zᵀ B z` of the final unit iterate, which
/// never exceeds the largest eigenvalue of `B`. If `B z` vanishes the estimate
/// is zero and the normalized start vector is returned.
pub fn power_iteration(
    nm: &NeighborMatrix,
    w: &IrwlsWeights,
    z0: &[f64],
    steps: usize,
) -> Result<(f64, DenseVector)> {
    if steps == 0 {
        return Err(PnmuError::parameter(
            "power iteration needs at least one step",
        ));
    }
    let start = DenseVector::from_slice(z0);
    if start.norm2() == 0.0 {
        return Err(PnmuError::parameter("power iteration start vector is zero"));
    }
    // validates shapes once
    apply_b(nm, w, z0)?;
    Ok(power_iteration_unchecked(nm, w, z0, steps))
}

pub(crate) fn power_iteration_unchecked(
    nm: &NeighborMatrix,
    w: &IrwlsWeights,
    z0: &[f64],
    steps: usize,
) -> (f64, DenseVector) {
    let start = DenseVector::from_slice(z0).normalized();
    let mut z = start.clone();
    for _ in 0..steps {
        let bz = apply_b_unchecked(nm, w, &z);
        let nrm = bz.norm2();
        if nrm == 0.0 {
            return (0.0, start);
        }
        z = DenseVector(bz.0.into_iter().map(|v| v / nrm).collect());
    }
    let bz = apply_b_unchecked(nm, w, &z);
    (z.dot(&bz).max(0.0), z)
}
