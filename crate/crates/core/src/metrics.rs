//! Quality measures for a factorization.

use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::grid::{tv_penalty, NeighborMatrix};
use crate::linalg::{frobenius_norm, inf_norm, DenseMatrix, FactorPair};

/// Entries with `|u| ≤ ZERO_THRESHOLD · max|U|` count as zeros.
pub const ZERO_THRESHOLD: f64 = 1e-9;

/// Summary written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub algorithm: String,
    pub rank: usize,
    pub phi_prime: f64,
    pub mu_prime: f64,
    pub seed: u64,
    pub relative_error_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improved_error_pct: Option<f64>,
    pub sparsity_pct: f64,
    pub spatial_coherence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_pct: Option<f64>,
    pub runtime_seconds: f64,
}

/// `100 ‖M − UV‖_F / ‖M‖_F`.
pub fn relative_error(m: &DenseMatrix, factors: &FactorPair) -> Result<f64> {
    if factors.u().n_rows() != m.n_rows() || factors.v().n_cols() != m.n_cols() {
        return Err(PnmuError::shape(format!(
            "factors {}x{} · {}x{} do not match data {}x{}",
            factors.u().n_rows(),
            factors.u().n_cols(),
            factors.v().n_rows(),
            factors.v().n_cols(),
            m.n_rows(),
            m.n_cols()
        )));
    }
    let denom = frobenius_norm(m);
    if denom == 0.0 {
        return Err(PnmuError::UndefinedMetric(
            "relative error of an all-zero matrix".into(),
        ));
    }
    let residual = m.sub(&factors.product())?;
    Ok(100.0 * frobenius_norm(&residual) / denom)
}

/// Percentage of zero entries of `U`, so higher means sparser.
///
/// Only the count-of-zeros reading is implemented; a "percentage of nonzero
/// entries" reading would be `100 − sparsity`.
pub fn sparsity(u: &DenseMatrix) -> f64 {
    let total = u.as_slice().len();
    if total == 0 {
        return 100.0;
    }
    let cut = ZERO_THRESHOLD * inf_norm(u.as_slice());
    let zeros = u.as_slice().iter().filter(|v| v.abs() <= cut).count();
    100.0 * zeros as f64 / total as f64
}

/// `Σ_k ‖N U(:,k)‖₁ / ‖U(:,k)‖₂`; zero columns contribute nothing.
pub fn spatial_coherence(nm: &NeighborMatrix, u: &DenseMatrix) -> Result<f64> {
    if u.n_rows() != nm.n_pixels() {
        return Err(PnmuError::shape(format!(
            "abundance matrix has {} rows, grid has {} pixels",
            u.n_rows(),
            nm.n_pixels()
        )));
    }
    let mut total = 0.0;
    for k in 0..u.n_cols() {
        let col = u.column(k);
        let nrm = col.norm2();
        if nrm > 0.0 {
            total += tv_penalty(nm, &col)? / nrm;
        }
    }
    Ok(total)
}

/// Columns scaled so their maximum entry is 1; columns with nonpositive max are zeroed.
pub fn max_normalize_columns(u: &DenseMatrix) -> DenseMatrix {
    let mut out = u.clone();
    for k in 0..u.n_cols() {
        let col = u.column(k);
        let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = if mx > 0.0 {
            col.iter().map(|v| v / mx).collect()
        } else {
            vec![0.0; col.len()]
        };
        out.set_column(k, &scaled);
    }
    out
}

/// `cost[k][l] = ‖U_true(:,k) − Ũ(:,l)‖²` with `Ũ` max-normalized.
pub fn match_cost_matrix(u_true: &DenseMatrix, u_est: &DenseMatrix) -> Result<Vec<Vec<f64>>> {
    if u_true.shape() != u_est.shape() {
        return Err(PnmuError::shape(format!(
            "ground truth {:?} and estimate {:?} differ in shape",
            u_true.shape(),
            u_est.shape()
        )));
    }
    let est = max_normalize_columns(u_est);
    let r = u_true.n_cols();
    let n = u_true.n_rows();
    Ok((0..r)
        .map(|k| {
            (0..r)
                .map(|l| {
                    (0..n)
                        .map(|i| {
                            let d = u_true.get(i, k) - est.get(i, l);
                            d * d
                        })
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Percent mismatch between ground-truth and estimated abundances after
/// max-normalizing the estimate and choosing the best column permutation.
pub fn match_score(u_true: &DenseMatrix, u_est: &DenseMatrix) -> Result<f64> {
    let cost = match_cost_matrix(u_true, u_est)?;
    let r = cost.len();
    if r == 0 || u_true.n_rows() == 0 {
        return Ok(0.0);
    }
    let assignment = min_cost_assignment(&cost);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(k, &l)| cost[k][l])
        .sum();
    Ok(100.0 * total / (u_true.n_rows() * r) as f64)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(r³)). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a virtual column 0, following the classic formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
