//! NMF baselines built on hierarchical alternating least squares (HALS).
//!
//! Each sweep updates the columns of `U` one at a time with the exact
//! nonnegative minimizer given everything else, repeats that block while it
//! still moves enough, then does the same for the rows of `V`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::linalg::{clip_nonneg, frobenius_norm, DenseMatrix, FactorPair};
use crate::metrics::sparsity;
use crate::rng::{self, streams};

/// Inner repetitions of a block update.
const MAX_INNER_REPS: usize = 3;
/// A repetition runs only while its change is at least this fraction of the first one.
const INNER_CHANGE_RATIO: f64 = 0.1;
/// Multiplicative step of the adaptive ℓ1 weight.
const PENALTY_FACTOR: f64 = 1.05;
/// Sparsity tolerance, in percentage points, for stopping the adaptive loop.
const SPARSITY_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalsConfig {
    pub max_outer: usize,
    /// Stop when the relative decrease of the error falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Target percentage of zeros in `U` for the sparse variant.
    pub target_sparsity: Option<f64>,
}

impl Default for HalsConfig {
    fn default() -> Self {
        HalsConfig {
            max_outer: 500,
            tol: 1e-6,
            seed: 0,
            target_sparsity: None,
        }
    }
}

impl HalsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 {
            return Err(PnmuError::parameter("max_outer must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(PnmuError::parameter("tol must be nonnegative"));
        }
        if let Some(t) = self.target_sparsity {
            if !(0.0..=100.0).contains(&t) {
                return Err(PnmuError::parameter(format!(
                    "target sparsity must lie in [0, 100], got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalsOutcome {
    pub factors: FactorPair,
    /// `‖M − UV‖_F` at the start and after every accepted sweep.
    pub errors: Vec<f64>,
    /// Input had negative entries that were clipped before fitting.
    pub clipped_input: bool,
    /// Sparsity of `U` reached by the sparse variant.
    pub achieved_sparsity: Option<f64>,
    /// Whether the sparse variant ended within tolerance of its target.
    pub target_reached: Option<bool>,
}

fn check_rank(m: &DenseMatrix, r: usize) -> Result<()> {
    if r == 0 || r > m.n_rows().min(m.n_cols()) {
        return Err(PnmuError::parameter(format!(
            "rank {r} is outside 1..={} for a {}x{} matrix",
            m.n_rows().min(m.n_cols()),
            m.n_rows(),
            m.n_cols()
        )));
    }
    Ok(())
}

fn random_start(m: &DenseMatrix, r: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let (n, cols) = m.shape();
    let mut rng = rng::stream(seed, streams::HALS_INIT);
    let u =
        DenseMatrix::from_vec_unchecked(n, r, (0..n * r).map(|_| rng.random::<f64>()).collect());
    let v = DenseMatrix::from_vec_unchecked(
        r,
        cols,
        (0..r * cols).map(|_| rng.random::<f64>()).collect(),
    );
    // optimal joint scaling of the random product
    let uv = u.matmul(&v).expect("conforming");
    let num: f64 = uv
        .as_slice()
        .iter()
        .zip(m.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let den: f64 = uv.as_slice().iter().map(|a| a * a).sum();
    let alpha = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    (u.scale(alpha), v)
}

fn error_of(m: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix) -> f64 {
    frobenius_norm(
        &m.sub(&u.matmul(v).expect("conforming"))
            .expect("same shape"),
    )
}

/// Gram matrix `AᵀA` of the columns of `a`.
fn gram_cols(a: &DenseMatrix) -> DenseMatrix {
    a.transpose().matmul(a).expect("conforming")
}

/// One block of column updates of `x` (n×r) for `min ‖M − X Y‖` given
/// `p = M Yᵀ` and `q = Y Yᵀ`, with optional ℓ1 weight and support mask.
/// Returns the squared size of the change.
fn update_columns(
    x: &mut DenseMatrix,
    p: &DenseMatrix,
    q: &DenseMatrix,
    l1: f64,
    mask: Option<&[bool]>,
) -> f64 {
    let (n, r) = x.shape();
    let mut change = 0.0;
    for k in 0..r {
        let qkk = q.get(k, k);
        for i in 0..n {
            let old = x.get(i, k);
            let new = if mask.is_some_and(|mk| !mk[i * r + k]) {
                0.0
            } else if qkk > 0.0 {
                let xq: f64 = x
                    .row(i)
                    .iter()
                    .zip(0..r)
                    .map(|(&xv, l)| xv * q.get(l, k))
                    .sum();
                (old + (p.get(i, k) - xq - l1) / qkk).max(0.0)
            } else {
                0.0
            };
            change += (new - old) * (new - old);
            x.set(i, k, new);
        }
    }
    change
}

/// Block update of `x` repeated while it keeps moving.
fn update_block(
    x: &mut DenseMatrix,
    p: &DenseMatrix,
    q: &DenseMatrix,
    l1: f64,
    mask: Option<&[bool]>,
) {
    let first = update_columns(x, p, q, l1, mask);
    for _ in 1..MAX_INNER_REPS {
        let change = update_columns(x, p, q, l1, mask);
        if change <= INNER_CHANGE_RATIO * first {
            break;
        }
    }
}

struct Engine<'a> {
    m: &'a DenseMatrix,
    max_outer: usize,
    tol: f64,
    u_mask: Option<Vec<bool>>,
    /// Mask of `Vᵀ` (m×r), matching the transposed update.
    vt_mask: Option<Vec<bool>>,
    target_sparsity: Option<f64>,
}

struct EngineResult {
    u: DenseMatrix,
    v: DenseMatrix,
    errors: Vec<f64>,
    target_reached: Option<bool>,
}

impl Engine<'_> {
    fn run(&self, mut u: DenseMatrix, v: DenseMatrix) -> EngineResult {
        let m = self.m;
        let mt = m.transpose();
        let mut vt = v.transpose();
        let mut errors = vec![error_of(m, &u, &vt.transpose())];

        let mut l1 = match self.target_sparsity {
            Some(t) if t > 0.0 => {
                let p = m.matmul(&vt).expect("conforming");
                1e-2 * p.as_slice().iter().sum::<f64>() / p.as_slice().len().max(1) as f64
            }
            _ => 0.0,
        };
        let mut target_reached = self.target_sparsity.map(|_| false);

        for _ in 0..self.max_outer {
            let prev_u = u.clone();
            let prev_vt = vt.clone();

            let p = m.matmul(&vt).expect("conforming");
            let q = gram_cols(&vt);
            update_block(&mut u, &p, &q, l1, self.u_mask.as_deref());

            let pt = mt.matmul(&u).expect("conforming");
            let qt = gram_cols(&u);
            update_block(&mut vt, &pt, &qt, 0.0, self.vt_mask.as_deref());

            if self.target_sparsity.is_some() {
                normalize_signatures(&mut u, &mut vt);
            }

            let err = error_of(m, &u, &vt.transpose());
            let prev = *errors.last().expect("nonempty");
            let rel_change = (prev - err).abs() / prev.max(f64::MIN_POSITIVE);

            match self.target_sparsity {
                None => {
                    if err > prev {
                        // rounding-level increase: keep the previous sweep and stop
                        u = prev_u;
                        vt = prev_vt;
                        break;
                    }
                    errors.push(err);
                    if rel_change < self.tol {
                        break;
                    }
                }
                Some(target) => {
                    errors.push(err);
                    let s = sparsity(&u);
                    let close = (s - target).abs() <= SPARSITY_TOLERANCE;
                    target_reached = Some(close);
                    if close && rel_change < self.tol {
                        break;
                    }
                    if s < target {
                        l1 = if l1 > 0.0 { l1 * PENALTY_FACTOR } else { 1e-6 };
                    } else if s > target {
                        l1 /= PENALTY_FACTOR;
                    }
                }
            }
        }
        EngineResult {
            u,
            v: vt.transpose(),
            errors,
            target_reached,
        }
    }
}

/// Moves the scale of each signature into the abundances so rows of `V` have unit norm.
fn normalize_signatures(u: &mut DenseMatrix, vt: &mut DenseMatrix) {
    let r = u.n_cols();
    for k in 0..r {
        let nrm = vt.column(k).norm2();
        if nrm > 0.0 {
            let col: Vec<f64> = vt.column(k).iter().map(|v| v / nrm).collect();
            vt.set_column(k, &col);
            let ucol: Vec<f64> = u.column(k).iter().map(|v| v * nrm).collect();
            u.set_column(k, &ucol);
        }
    }
}

fn prepare(m: &DenseMatrix) -> (DenseMatrix, bool) {
    let clipped = !m.is_nonnegative();
    (if clipped { clip_nonneg(m) } else { m.clone() }, clipped)
}

/// Plain HALS NMF of rank `r`. Negative input entries are clipped first.
pub fn hals_nmf(m: &DenseMatrix, r: usize, config: &HalsConfig) -> Result<HalsOutcome> {
    config.validate()?;
    check_rank(m, r)?;
    let (data, clipped_input) = prepare(m);
    let (n, cols) = m.shape();
    if !data.as_slice().iter().any(|&v| v > 0.0) {
        return Ok(HalsOutcome {
            factors: FactorPair::zeros(n, r, cols),
            errors: vec![0.0],
            clipped_input,
            achieved_sparsity: None,
            target_reached: None,
        });
    }
    let (u, v) = random_start(&data, r, config.seed);
    let res = Engine {
        m: &data,
        max_outer: config.max_outer,
        tol: config.tol,
        u_mask: None,
        vt_mask: None,
        target_sparsity: None,
    }
    .run(u, v);
    Ok(HalsOutcome {
        factors: FactorPair::from_parts_unchecked(res.u, res.v),
        errors: res.errors,
        clipped_input,
        achieved_sparsity: None,
        target_reached: None,
    })
}

/// HALS with an adaptive ℓ1 penalty on `U` steering `sparsity(U)` towards
/// `config.target_sparsity` (percent of zeros).
///
/// The penalty grows by 5% per sweep while `U` is too dense and shrinks by the
/// same factor while it is too sparse. Rows of `V` are kept at unit norm so
/// the penalty has a fixed scale.
pub fn sparse_nmf(m: &DenseMatrix, r: usize, config: &HalsConfig) -> Result<HalsOutcome> {
    config.validate()?;
    check_rank(m, r)?;
    let target = config
        .target_sparsity
        .ok_or_else(|| PnmuError::parameter("sparse NMF needs a target sparsity"))?;
    let (data, clipped_input) = prepare(m);
    let (n, cols) = m.shape();
    if !data.as_slice().iter().any(|&v| v > 0.0) {
        return Ok(HalsOutcome {
            factors: FactorPair::zeros(n, r, cols),
            errors: vec![0.0],
            clipped_input,
            achieved_sparsity: Some(100.0),
            target_reached: Some((100.0 - target).abs() <= SPARSITY_TOLERANCE),
        });
    }
    let (mut u, v) = random_start(&data, r, config.seed);
    let mut vt = v.transpose();
    normalize_signatures(&mut u, &mut vt);
    let res = Engine {
        m: &data,
        max_outer: config.max_outer,
        tol: config.tol,
        u_mask: None,
        vt_mask: None,
        target_sparsity: Some(target),
    }
    .run(u, vt.transpose());
    let achieved = sparsity(&res.u);
    Ok(HalsOutcome {
        factors: FactorPair::from_parts_unchecked(res.u, res.v),
        errors: res.errors,
        clipped_input,
        achieved_sparsity: Some(achieved),
        target_reached: res.target_reached,
    })
}

/// Refines existing factors by HALS over their nonzero entries only.
///
/// Entries that are zero in `factors` stay exactly zero. The data is used as
/// given, so the resulting error is comparable with the input's.
pub fn refit_fixed_support(
    m: &DenseMatrix,
    factors: &FactorPair,
    sweeps: usize,
) -> Result<HalsOutcome> {
    if factors.u().n_rows() != m.n_rows() || factors.v().n_cols() != m.n_cols() {
        return Err(PnmuError::shape("factors do not match the data matrix"));
    }
    let u = factors.u().clone();
    let v = factors.v().clone();
    let u_mask: Vec<bool> = u.as_slice().iter().map(|&a| a != 0.0).collect();
    let vt_mask: Vec<bool> = v.transpose().as_slice().iter().map(|&a| a != 0.0).collect();
    let res = Engine {
        m,
        max_outer: sweeps,
        tol: 0.0,
        u_mask: Some(u_mask),
        vt_mask: Some(vt_mask),
        target_sparsity: None,
    }
    .run(u, v);
    Ok(HalsOutcome {
        factors: FactorPair::from_parts_unchecked(res.u, res.v),
        errors: res.errors,
        clipped_input: false,
        achieved_sparsity: None,
        target_reached: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outer(a: &[f64], b: &[f64]) -> DenseMatrix {
        let data = a
            .iter()
            .flat_map(|&p| b.iter().map(move |&q| p * q))
            .collect();
        DenseMatrix::from_vec(a.len(), b.len(), data).unwrap()
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DenseMatrix {
        let mut rng = rng::stream(seed, 99);
        DenseMatrix::from_vec(n, m, (0..n * m).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn rank_one_is_exact() {
        let m = outer(&[1.0, 2.0, 0.5, 3.0], &[0.3, 1.0, 2.0]);
        let out = hals_nmf(&m, 1, &HalsConfig::default()).unwrap();
        let rel = error_of(&m, out.factors.u(), out.factors.v()) / frobenius_norm(&m);
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn error_sequence_non_increasing() {
        let m = random_matrix(20, 15, 1);
        let out = hals_nmf(
            &m,
            5,
            &HalsConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.errors.len() > 2);
        for w in out.errors.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(out.factors.u().is_nonnegative() && out.factors.v().is_nonnegative());
    }

    #[test]
    fn zero_matrix_gives_zero_factors() {
        let out = hals_nmf(&DenseMatrix::zeros(4, 3), 2, &HalsConfig::default()).unwrap();
        assert!(out.factors.u().as_slice().iter().all(|&v| v == 0.0));
        assert!(out.factors.v().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_too_large() {
        let m = random_matrix(4, 3, 0);
        assert!(matches!(
            hals_nmf(&m, 4, &HalsConfig::default()),
            Err(PnmuError::Parameter(_))
        ));
        assert!(hals_nmf(&m, 0, &HalsConfig::default()).is_err());
    }

    #[test]
    fn negative_input_is_clipped() {
        let mut m = random_matrix(6, 5, 3);
        m.set(0, 0, -1.0);
        let out = hals_nmf(&m, 2, &HalsConfig::default()).unwrap();
        assert!(out.clipped_input);
    }

    #[test]
    fn sparse_needs_target() {
        let m = random_matrix(6, 5, 3);
        assert!(sparse_nmf(&m, 2, &HalsConfig::default()).is_err());
        let bad = HalsConfig {
            target_sparsity: Some(120.0),
            ..Default::default()
        };
        assert!(sparse_nmf(&m, 2, &bad).is_err());
    }

    #[test]
    fn sparse_zero_target_behaves_like_hals() {
        let m = random_matrix(12, 10, 4);
        let cfg = HalsConfig {
            target_sparsity: Some(0.0),
            seed: 1,
            ..Default::default()
        };
        let sparse = sparse_nmf(&m, 3, &cfg).unwrap();
        let plain = hals_nmf(
            &m,
            3,
            &HalsConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let es = sparse.errors.last().unwrap();
        let ep = plain.errors.last().unwrap();
        assert!((es - ep).abs() <= 0.05 * ep, "{es} vs {ep}");
    }

    #[test]
    fn sparse_reaches_moderate_target() {
        let m = random_matrix(30, 12, 5);
        let cfg = HalsConfig {
            target_sparsity: Some(50.0),
            seed: 3,
            ..Default::default()
        };
        let out = sparse_nmf(&m, 4, &cfg).unwrap();
        let s = out.achieved_sparsity.unwrap();
        assert!((s - 50.0).abs() <= 5.0, "achieved {s}");
        assert!(out.factors.u().is_nonnegative() && out.factors.v().is_nonnegative());
    }

    #[test]
    fn sparse_unreachable_target_flags() {
        let m = random_matrix(10, 8, 6);
        let cfg = HalsConfig {
            target_sparsity: Some(100.0),
            max_outer: 60,
            ..Default::default()
        };
        let out = sparse_nmf(&m, 2, &cfg).unwrap();
        assert_eq!(out.target_reached, Some(false));
    }

    #[test]
    fn refit_preserves_support_and_lowers_error() {
        let m = random_matrix(15, 9, 7);
        let mut u = random_matrix(15, 3, 8);
        let mut v = random_matrix(3, 9, 9);
        for i in (0..15).step_by(2) {
            u.set(i, 1, 0.0);
        }
        v.set(0, 4, 0.0);
        v.set(2, 0, 0.0);
        let start = FactorPair::new(u.clone(), v.clone()).unwrap();
        let out = refit_fixed_support(&m, &start, 50).unwrap();
        for (a, b) in u.as_slice().iter().zip(out.factors.u().as_slice()) {
            if *a == 0.0 {
                assert_eq!(*b, 0.0);
            }
        }
        for (a, b) in v.as_slice().iter().zip(out.factors.v().as_slice()) {
            if *a == 0.0 {
                assert_eq!(*b, 0.0);
            }
        }
        assert!(out.errors.last().unwrap() <= &out.errors[0]);
        for w in out.errors.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn refit_dense_start_matches_hals_refinement() {
        let m = random_matrix(10, 7, 10);
        let start = FactorPair::new(random_matrix(10, 2, 11), random_matrix(2, 7, 12)).unwrap();
        let refit = refit_fixed_support(&m, &start, 30).unwrap();
        let plain = Engine {
            m: &m,
            max_outer: 30,
            tol: 0.0,
            u_mask: None,
            vt_mask: None,
            target_sparsity: None,
        }
        .run(start.u().clone(), start.v().clone());
        assert_eq!(refit.factors.u(), &plain.u);
        assert_eq!(refit.factors.v(), &plain.v);
    }
}
