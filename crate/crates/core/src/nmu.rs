//! Sequential nonnegative matrix underapproximation with sparsity and
//! spatial priors.
//!
//! Each rank-one factor maximizes
//!
//! ```text
//! xᵀ(M − Λ)y − φ‖x‖₁ − μ‖N x‖₁   s.t. ‖x‖₂ ≤ 1, ‖y‖₂ = 1, x, y ≥ 0
//! ```
//!
//! by alternating projected ascent steps on `x` (with the TV term smoothed
//! by IRWLS), a closed-form update of `y`, and a projected subgradient step
//! on the multipliers `Λ` of the underapproximation constraint `x σ yᵀ ≤ M`.
//! After each factor the data is deflated with `max(0, M − u vᵀ)`.
//!
//! The penalty weights are scale free: `φ = φ′‖(M−Λ)y‖∞` and
//! `μ = μ′‖(M−Λ)y‖∞ / ‖B x‖∞` with `φ′, μ′ ∈ [0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::grid::{
    apply_b_unchecked, power_iteration_unchecked, GridShape, IrwlsWeights, NeighborMatrix,
};
use crate::linalg::{
    clip_nonneg, inf_norm, mat_t_vec_unchecked, mat_vec_unchecked, DenseMatrix, DenseVector,
    FactorPair,
};
use crate::rng::{self, streams};

/// Power-method steps used to seed the NMU initializer with the best rank-one direction.
const INIT_POWER_STEPS: usize = 20;

/// Which penalties are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No penalties.
    Nmu,
    /// Spatial (TV) penalty only.
    Lnmu,
    /// Sparsity penalty only.
    Snmu,
    /// Both penalties.
    Pnmu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Nmu, Variant::Lnmu, Variant::Snmu, Variant::Pnmu];

    /// Maps configured `(φ′, μ′)` to the pair this variant actually uses.
    pub fn effective_weights(self, phi_prime: f64, mu_prime: f64) -> (f64, f64) {
        match self {
            Variant::Nmu => (0.0, 0.0),
            Variant::Lnmu => (0.0, mu_prime),
            Variant::Snmu => (phi_prime, 0.0),
            Variant::Pnmu => (phi_prime, mu_prime),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nmu => "nmu",
            Variant::Lnmu => "lnmu",
            Variant::Snmu => "snmu",
            Variant::Pnmu => "pnmu",
        }
    }
}

/// Parameters of one PNMU run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnmuConfig {
    /// Sparsity weight φ′ in `[0, 1]`.
    pub phi_prime: f64,
    /// Spatial weight μ′ in `[0, 1]`.
    pub mu_prime: f64,
    /// IRWLS smoothing and Lipschitz floor ε.
    pub epsilon: f64,
    /// Outer iterations per rank-one factor.
    pub maxiter: usize,
    /// Power-method steps and ascent steps per outer iteration.
    pub inner_iter: usize,
    /// Iterations of the plain NMU initializer. A short run leaves the
    /// multipliers small enough for the priors to reshape the support.
    pub init_iter: usize,
    pub seed: u64,
}

impl Default for PnmuConfig {
    fn default() -> Self {
        PnmuConfig {
            phi_prime: 0.7,
            mu_prime: 0.5,
            epsilon: 1e-3,
            maxiter: 500,
            inner_iter: 10,
            init_iter: 15,
            seed: 0,
        }
    }
}

impl PnmuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.phi_prime) {
            return Err(PnmuError::parameter(format!(
                "phi' must lie in [0, 1], got {}",
                self.phi_prime
            )));
        }
        if !(0.0..=1.0).contains(&self.mu_prime) {
            return Err(PnmuError::parameter(format!(
                "mu' must lie in [0, 1], got {}",
                self.mu_prime
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PnmuError::parameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.maxiter == 0 || self.inner_iter == 0 || self.init_iter == 0 {
            return Err(PnmuError::parameter("iteration counts must be at least 1"));
        }
        Ok(())
    }

    /// The same configuration with the weights a variant uses.
    pub fn for_variant(&self, variant: Variant) -> PnmuConfig {
        let (phi_prime, mu_prime) = variant.effective_weights(self.phi_prime, self.mu_prime);
        PnmuConfig {
            phi_prime,
            mu_prime,
            ..self.clone()
        }
    }
}

/// Iterates of the rank-one solver.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneState {
    /// Abundance iterate, `x ≥ 0`, `‖x‖₂ ≤ 1`.
    pub x: DenseVector,
    /// Signature iterate, `y ≥ 0`, unit norm or zero.
    pub y: DenseVector,
    /// Multipliers `Λ ≥ 0`, same shape as the data.
    pub lambda: DenseMatrix,
    /// Scale of the last saved pair.
    pub sigma: f64,
    /// Last saved abundance vector `u_k`.
    pub u_best: DenseVector,
    /// Last saved signature `v_k = σ y`.
    pub v_best: DenseVector,
    /// Set when the data has no positive entry and the state is all zeros.
    pub degenerate: bool,
}

impl RankOneState {
    fn zero(n: usize, m: usize) -> Self {
        RankOneState {
            x: DenseVector::zeros(n),
            y: DenseVector::zeros(m),
            lambda: DenseMatrix::zeros(n, m),
            sigma: 0.0,
            u_best: DenseVector::zeros(n),
            v_best: DenseVector::zeros(m),
            degenerate: true,
        }
    }
}

/// Divides by the ℓ2 norm and guarantees the computed norm of the result is at most 1.
fn unit_normalize(v: &mut [f64]) {
    let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return;
    }
    for a in v.iter_mut() {
        *a /= nrm;
    }
    // rounding can leave the norm one ulp above 1
    while v.iter().map(|a| a * a).sum::<f64>().sqrt() > 1.0 {
        for a in v.iter_mut() {
            *a *= 1.0 - f64::EPSILON;
        }
    }
}

fn clamp_vec(v: &mut [f64]) {
    for a in v.iter_mut() {
        *a = a.max(0.0);
    }
}

/// Best unconstrained rank-one direction of `m` by alternating power steps, clipped to ≥ 0.
fn rank_one_power_start(m: &DenseMatrix, rng: &mut rng::StreamRng) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut v: Vec<f64> = (0..m.n_cols()).map(|_| rng.random::<f64>()).collect();
    let mut u = vec![0.0; m.n_rows()];
    for _ in 0..INIT_POWER_STEPS {
        u = mat_vec_unchecked(m, &v).0;
        let nu = DenseVector::from_slice(&u).norm2();
        if nu == 0.0 {
            return None;
        }
        u.iter_mut().for_each(|a| *a /= nu);
        v = mat_t_vec_unchecked(m, &u).0;
        let nv = DenseVector::from_slice(&v).norm2();
        if nv == 0.0 {
            return None;
        }
        v.iter_mut().for_each(|a| *a /= nv);
    }
    // singular vectors are defined up to a joint sign flip
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|a| *a = -*a);
        v.iter_mut().for_each(|a| *a = -*a);
    }
    clamp_vec(&mut u);
    clamp_vec(&mut v);
    if u.iter().all(|&a| a == 0.0) || v.iter().all(|&a| a == 0.0) {
        return None;
    }
    unit_normalize(&mut u);
    unit_normalize(&mut v);
    Some((u, v))
}

/// Coordinates of the largest entry as a fallback starting pair.
fn largest_entry_start(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let (pos, _) = m
        .as_slice()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    let mut u = vec![0.0; m.n_rows()];
    let mut v = vec![0.0; m.n_cols()];
    u[pos / m.n_cols()] = 1.0;
    v[pos % m.n_cols()] = 1.0;
    (u, v)
}

/// Approximate rank-one NMU used to start the prior-aware iteration.
///
/// Runs the classic three-step scheme (closed-form `u`, closed-form `v`,
/// multiplier step of size `1/t`) from `Λ = 0` and a clipped power-method
/// estimate of the leading singular pair.
pub fn nmu_rank_one_init(m: &DenseMatrix, init_iter: usize, seed: u64) -> Result<RankOneState> {
    if init_iter == 0 {
        return Err(PnmuError::parameter("init_iter must be at least 1"));
    }
    Ok(init_with_rng(
        m,
        init_iter,
        &mut rng::stream(seed, streams::SOLVER_BASE),
    ))
}

fn init_with_rng(m: &DenseMatrix, init_iter: usize, rng: &mut rng::StreamRng) -> RankOneState {
    let (n, cols) = m.shape();
    if !m.as_slice().iter().any(|&v| v > 0.0) {
        return RankOneState::zero(n, cols);
    }
    let (mut u, mut v) = rank_one_power_start(m, rng).unwrap_or_else(|| largest_entry_start(m));
    let mut lambda = DenseMatrix::zeros(n, cols);
    let mut a = m.clone();
    for t in 1..=init_iter {
        for ((aij, &mij), &lij) in a
            .as_mut_slice()
            .iter_mut()
            .zip(m.as_slice())
            .zip(lambda.as_slice())
        {
            *aij = mij - lij;
        }
        let mut u_new = mat_vec_unchecked(&a, &v).0;
        clamp_vec(&mut u_new);
        if u_new.iter().all(|&x| x == 0.0) {
            break;
        }
        unit_normalize(&mut u_new);
        let mut v_new = mat_t_vec_unchecked(&a, &u_new).0;
        clamp_vec(&mut v_new);
        if v_new.iter().all(|&x| x == 0.0) {
            break;
        }
        unit_normalize(&mut v_new);
        u = u_new;
        v = v_new;
        let av = mat_vec_unchecked(&a, &v);
        let sigma = av.iter().zip(&u).map(|(p, q)| p * q).sum::<f64>().max(0.0);
        let step = 1.0 / t as f64;
        let lam = lambda.as_mut_slice();
        for i in 0..n {
            let row = m.row(i);
            let su = sigma * u[i];
            for j in 0..cols {
                let idx = i * cols + j;
                lam[idx] = (lam[idx] + step * (su * v[j] - row[j])).max(0.0);
            }
        }
    }
    let a = m.sub(&lambda).expect("same shape");
    let av = mat_vec_unchecked(&a, &v);
    let sigma = av.iter().zip(&u).map(|(p, q)| p * q).sum::<f64>().max(0.0);
    RankOneState {
        x: DenseVector(u.clone()),
        y: DenseVector(v.clone()),
        lambda,
        sigma,
        u_best: DenseVector(u),
        v_best: DenseVector(v),
        degenerate: false,
    }
}

/// `P(s)`: clip to the nonnegative orthant, then pull back onto the unit sphere if outside the ball.
pub fn project_unit_ball(s: &[f64]) -> DenseVector {
    let mut t: Vec<f64> = s.iter().map(|&v| v.max(0.0)).collect();
    let nrm = t.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nrm >= 1.0 {
        unit_normalize(&mut t);
    }
    DenseVector(t)
}

/// `φ = φ′ ‖A y‖∞`.
pub fn sparsity_penalty(a: &DenseMatrix, y: &[f64], phi_prime: f64) -> Result<f64> {
    if phi_prime == 0.0 {
        return Ok(0.0);
    }
    let ay = crate::linalg::mat_vec(a, y, false)?;
    Ok(phi_prime * inf_norm(&ay))
}

/// `μ = μ′ ‖A y‖∞ / ‖B x‖∞`, zero when `μ′ = 0` or `B x = 0`.
pub fn spatial_penalty(
    a: &DenseMatrix,
    y: &[f64],
    nm: &NeighborMatrix,
    w: &IrwlsWeights,
    x: &[f64],
    mu_prime: f64,
) -> Result<f64> {
    if mu_prime == 0.0 {
        return Ok(0.0);
    }
    let ay = crate::linalg::mat_vec(a, y, false)?;
    let bx = crate::grid::apply_b(nm, w, x)?;
    Ok(spatial_weight(inf_norm(&ay), inf_norm(&bx), mu_prime))
}

#[inline]
fn spatial_weight(ay_inf: f64, bx_inf: f64, mu_prime: f64) -> f64 {
    if mu_prime == 0.0 || bx_inf == 0.0 {
        0.0
    } else {
        mu_prime * ay_inf / bx_inf
    }
}

/// One projected ascent step on `x`: `P(L x + A y − μ B x − φ e)` with `L = max(ε, μ λ̂)`.
///
/// `bx` may be omitted when `μ = 0`.
pub fn ascent_step_u(
    x: &[f64],
    ay: &[f64],
    bx: Option<&[f64]>,
    phi: f64,
    mu: f64,
    lambda_hat: f64,
    epsilon: f64,
) -> DenseVector {
    let lip = epsilon.max(mu * lambda_hat);
    let s: Vec<f64> = match bx {
        Some(bx) => x
            .iter()
            .zip(ay)
            .zip(bx)
            .map(|((&xi, &ai), &bi)| lip * xi + (ai - mu * bi - phi))
            .collect(),
        None => x
            .iter()
            .zip(ay)
            .map(|(&xi, &ai)| lip * xi + (ai - phi))
            .collect(),
    };
    project_unit_ball(&s)
}

/// `y = max(0, Aᵀx)`, normalized when nonzero.
pub fn update_v(a: &DenseMatrix, x: &[f64]) -> Result<DenseVector> {
    let mut y = crate::linalg::mat_vec(a, x, true)?;
    clamp_vec(&mut y);
    unit_normalize(&mut y);
    Ok(y)
}

fn update_v_unchecked(a: &DenseMatrix, x: &[f64]) -> DenseVector {
    let mut y = mat_t_vec_unchecked(a, x);
    clamp_vec(&mut y);
    unit_normalize(&mut y);
    y
}

/// `Λ ← max(0, Λ − (M − u vᵀ)/(t+1))`.
pub fn multiplier_step(lambda: &mut DenseMatrix, m: &DenseMatrix, u: &[f64], v: &[f64], t: usize) {
    let step = 1.0 / (t as f64 + 1.0);
    let cols = m.n_cols();
    let lam = lambda.as_mut_slice();
    for (i, &ui) in u.iter().enumerate() {
        let row = m.row(i);
        for j in 0..cols {
            let idx = i * cols + j;
            lam[idx] = (lam[idx] - step * (row[j] - ui * v[j])).max(0.0);
        }
    }
}

/// Outcome of the multiplier update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierUpdate {
    /// `(x, y)` was saved and `Λ` moved along the constraint violation.
    Saved,
    /// An iterate vanished; `Λ` was halved and the last saved pair restored.
    Restored,
    /// An iterate vanished and there is no nonzero pair to fall back on.
    Exhausted,
}

/// Saves the current pair and updates `Λ`, or halves `Λ` and restores the
/// last saved pair when an iterate has collapsed to zero.
///
/// `a` must be `M − Λ` as it was when the iterates were computed.
pub fn update_multipliers(
    state: &mut RankOneState,
    m: &DenseMatrix,
    a: &DenseMatrix,
    t: usize,
) -> Result<MultiplierUpdate> {
    if state.x.len() != m.n_rows() || state.y.len() != m.n_cols() || a.shape() != m.shape() {
        return Err(PnmuError::shape(
            "state does not conform to the data matrix",
        ));
    }
    Ok(update_multipliers_unchecked(state, m, a, t))
}

fn update_multipliers_unchecked(
    state: &mut RankOneState,
    m: &DenseMatrix,
    a: &DenseMatrix,
    t: usize,
) -> MultiplierUpdate {
    if !state.x.is_zero() && !state.y.is_zero() {
        let ay = mat_vec_unchecked(a, &state.y);
        // equals ‖max(0, Aᵀx)‖₂ when y came from x, so ≥ 0 up to rounding
        let sigma = state.x.dot(&ay).max(0.0);
        state.sigma = sigma;
        state.u_best = state.x.clone();
        state.v_best = DenseVector(state.y.iter().map(|&v| sigma * v).collect());
        multiplier_step(&mut state.lambda, m, &state.u_best, &state.v_best, t);
        MultiplierUpdate::Saved
    } else {
        state
            .lambda
            .as_mut_slice()
            .iter_mut()
            .for_each(|l| *l /= 2.0);
        if state.u_best.is_zero() || state.v_best.is_zero() {
            return MultiplierUpdate::Exhausted;
        }
        let mut x = state.u_best.clone();
        unit_normalize(&mut x);
        let mut y = state.v_best.clone();
        unit_normalize(&mut y);
        state.x = x;
        state.y = y;
        MultiplierUpdate::Restored
    }
}

/// How a rank-one computation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOneStatus {
    Completed,
    /// The data had no positive entry.
    Degenerate,
    /// Iterates vanished with no saved pair to restore.
    Collapsed,
}

/// Change between consecutive outer iterates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateDelta {
    pub t: usize,
    pub dx: f64,
    pub dy: f64,
}

/// Result of one rank-one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneOutcome {
    pub u: DenseVector,
    pub v: DenseVector,
    pub status: RankOneStatus,
    pub deltas: Vec<IterateDelta>,
}

impl RankOneOutcome {
    fn zero(n: usize, m: usize, status: RankOneStatus) -> Self {
        RankOneOutcome {
            u: DenseVector::zeros(n),
            v: DenseVector::zeros(m),
            status,
            deltas: Vec::new(),
        }
    }
}

/// View of the solver state after an outer iteration.
pub struct IterationSnapshot<'a> {
    pub factor: usize,
    pub t: usize,
    pub state: &'a RankOneState,
}

/// Hooks into a running factorization.
pub trait SolverObserver {
    fn on_iteration(&mut self, _snapshot: &IterationSnapshot<'_>) {}
    fn on_deflation(&mut self, _factor: usize, _residual: &DenseMatrix) {}
}

impl SolverObserver for () {}

/// Rank-one PNMU on `m` over the grid described by `nm`.
pub fn rank_one_pnmu(
    m: &DenseMatrix,
    nm: &NeighborMatrix,
    config: &PnmuConfig,
) -> Result<RankOneOutcome> {
    config.validate()?;
    if nm.n_pixels() != m.n_rows() {
        return Err(PnmuError::shape(format!(
            "grid has {} pixels but the data has {} rows",
            nm.n_pixels(),
            m.n_rows()
        )));
    }
    Ok(rank_one_prior(m, nm, config, 0, &mut ()))
}

/// Rank-one NMU without penalties. Matches [`rank_one_pnmu`] at `φ′ = μ′ = 0`
/// bit for bit while skipping all TV machinery.
pub fn rank_one_nmu(m: &DenseMatrix, config: &PnmuConfig) -> Result<RankOneOutcome> {
    config.validate()?;
    Ok(rank_one_plain(m, config, 0, &mut ()))
}

fn start_state(m: &DenseMatrix, config: &PnmuConfig, factor: usize) -> Option<RankOneState> {
    let mut rng = rng::stream(config.seed, streams::SOLVER_BASE + 2 * factor as u64);
    let mut state = init_with_rng(m, config.init_iter, &mut rng);
    if state.degenerate {
        return None;
    }
    state.u_best = state.x.clone();
    state.v_best = state.y.clone();
    unit_normalize(&mut state.x);
    unit_normalize(&mut state.y);
    Some(state)
}

fn initial_threshold(state: &mut RankOneState, phi_prime: f64) {
    let cut = phi_prime * inf_norm(&state.x);
    for v in state.x.iter_mut() {
        *v = (*v - cut).max(0.0);
    }
    unit_normalize(&mut state.x);
}

fn fill_residual(a: &mut DenseMatrix, m: &DenseMatrix, lambda: &DenseMatrix) {
    for ((aij, &mij), &lij) in a
        .as_mut_slice()
        .iter_mut()
        .zip(m.as_slice())
        .zip(lambda.as_slice())
    {
        *aij = mij - lij;
    }
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn finish(state: RankOneState, status: RankOneStatus, deltas: Vec<IterateDelta>) -> RankOneOutcome {
    if status == RankOneStatus::Collapsed {
        let n = state.u_best.len();
        let m = state.v_best.len();
        return RankOneOutcome {
            deltas,
            ..RankOneOutcome::zero(n, m, status)
        };
    }
    RankOneOutcome {
        u: state.u_best,
        v: state.v_best,
        status,
        deltas,
    }
}

fn rank_one_prior(
    m: &DenseMatrix,
    nm: &NeighborMatrix,
    config: &PnmuConfig,
    factor: usize,
    observer: &mut dyn SolverObserver,
) -> RankOneOutcome {
    let (n, cols) = m.shape();
    let Some(mut state) = start_state(m, config, factor) else {
        return RankOneOutcome::zero(n, cols, RankOneStatus::Degenerate);
    };
    let spatial = config.mu_prime > 0.0;
    let eps = config.epsilon;

    let mut weights = spatial.then(|| IrwlsWeights::compute_unchecked(nm, &state.x, eps));
    let a0 = m.sub(&state.lambda).expect("same shape");
    let phi = config.phi_prime * inf_norm(&mat_vec_unchecked(&a0, &state.y));
    initial_threshold(&mut state, config.phi_prime);

    let mut z = if spatial {
        let mut rng = rng::stream(config.seed, streams::SOLVER_BASE + 2 * factor as u64 + 1);
        DenseVector((0..n).map(|_| rng.random::<f64>()).collect())
    } else {
        DenseVector::default()
    };

    let mut a = a0;
    let mut deltas = Vec::with_capacity(config.maxiter);
    for t in 1..=config.maxiter {
        fill_residual(&mut a, m, &state.lambda);
        let x_prev = state.x.clone();
        let y_prev = state.y.clone();

        let lambda_hat = match &weights {
            Some(w) => {
                let (lh, z_next) = power_iteration_unchecked(nm, w, &z, config.inner_iter);
                z = z_next;
                lh
            }
            None => 0.0,
        };
        let ay = mat_vec_unchecked(&a, &state.y);
        let ay_inf = inf_norm(&ay);
        for _ in 0..config.inner_iter {
            state.x = match &weights {
                Some(w) => {
                    let bx = apply_b_unchecked(nm, w, &state.x);
                    let mu = spatial_weight(ay_inf, inf_norm(&bx), config.mu_prime);
                    ascent_step_u(&state.x, &ay, Some(&bx), phi, mu, lambda_hat, eps)
                }
                None => ascent_step_u(&state.x, &ay, None, phi, 0.0, lambda_hat, eps),
            };
        }
        state.y = update_v_unchecked(&a, &state.x);

        let update = update_multipliers_unchecked(&mut state, m, &a, t);
        deltas.push(IterateDelta {
            t,
            dx: diff_norm(&state.x, &x_prev),
            dy: diff_norm(&state.y, &y_prev),
        });
        observer.on_iteration(&IterationSnapshot {
            factor,
            t,
            state: &state,
        });
        if update == MultiplierUpdate::Exhausted {
            return finish(state, RankOneStatus::Collapsed, deltas);
        }
        if let Some(w) = weights.as_mut() {
            *w = IrwlsWeights::compute_unchecked(nm, &state.x, eps);
        }
    }
    finish(state, RankOneStatus::Completed, deltas)
}

fn rank_one_plain(
    m: &DenseMatrix,
    config: &PnmuConfig,
    factor: usize,
    observer: &mut dyn SolverObserver,
) -> RankOneOutcome {
    let (n, cols) = m.shape();
    let Some(mut state) = start_state(m, config, factor) else {
        return RankOneOutcome::zero(n, cols, RankOneStatus::Degenerate);
    };
    // zero-width threshold, kept for the trailing renormalization
    initial_threshold(&mut state, 0.0);

    let mut a = m.clone();
    let mut deltas = Vec::with_capacity(config.maxiter);
    for t in 1..=config.maxiter {
        fill_residual(&mut a, m, &state.lambda);
        let x_prev = state.x.clone();
        let y_prev = state.y.clone();

        let ay = mat_vec_unchecked(&a, &state.y);
        for _ in 0..config.inner_iter {
            let s: Vec<f64> = state
                .x
                .iter()
                .zip(ay.iter())
                .map(|(&xi, &ai)| config.epsilon * xi + (ai - 0.0))
                .collect();
            state.x = project_unit_ball(&s);
        }
        state.y = update_v_unchecked(&a, &state.x);

        let update = update_multipliers_unchecked(&mut state, m, &a, t);
        deltas.push(IterateDelta {
            t,
            dx: diff_norm(&state.x, &x_prev),
            dy: diff_norm(&state.y, &y_prev),
        });
        observer.on_iteration(&IterationSnapshot {
            factor,
            t,
            state: &state,
        });
        if update == MultiplierUpdate::Exhausted {
            return finish(state, RankOneStatus::Collapsed, deltas);
        }
    }
    finish(state, RankOneStatus::Completed, deltas)
}

/// Result of a sequential factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub factors: FactorPair,
    pub statuses: Vec<RankOneStatus>,
    /// Per-factor iterate changes, in extraction order.
    pub deltas: Vec<Vec<IterateDelta>>,
    /// Set when the residual vanished before all `r` factors were extracted.
    pub exhausted_early: bool,
}

/// Extracts `r` rank-one factors sequentially, deflating with `max(0, M − u vᵀ)`.
pub fn factorize(
    m: &DenseMatrix,
    grid: GridShape,
    r: usize,
    config: &PnmuConfig,
    variant: Variant,
) -> Result<Factorization> {
    factorize_observed(m, grid, r, config, variant, &mut ())
}

pub fn factorize_observed(
    m: &DenseMatrix,
    grid: GridShape,
    r: usize,
    config: &PnmuConfig,
    variant: Variant,
    observer: &mut dyn SolverObserver,
) -> Result<Factorization> {
    if r == 0 {
        return Err(PnmuError::parameter("rank must be at least 1"));
    }
    if grid.n_pixels() != m.n_rows() {
        return Err(PnmuError::parameter(format!(
            "grid {}x{} has {} pixels but the data has {} rows",
            grid.height(),
            grid.width(),
            grid.n_pixels(),
            m.n_rows()
        )));
    }
    let config = config.for_variant(variant);
    config.validate()?;
    let nm = NeighborMatrix::build(grid);
    let (n, cols) = m.shape();

    let mut u_mat = DenseMatrix::zeros(n, r);
    let mut v_mat = DenseMatrix::zeros(r, cols);
    let mut statuses = Vec::with_capacity(r);
    let mut deltas = Vec::with_capacity(r);
    let mut exhausted_early = false;
    let mut residual = m.clone();

    for k in 0..r {
        if !residual.as_slice().iter().any(|&v| v > 0.0) {
            exhausted_early = true;
            statuses.push(RankOneStatus::Degenerate);
            deltas.push(Vec::new());
            continue;
        }
        let outcome = if variant == Variant::Nmu {
            rank_one_plain(&residual, &config, k, observer)
        } else {
            rank_one_prior(&residual, &nm, &config, k, observer)
        };
        u_mat.set_column(k, &outcome.u);
        v_mat.set_row(k, &outcome.v);
        for i in 0..n {
            let ui = outcome.u[i];
            for j in 0..cols {
                let val = residual.get(i, j) - ui * outcome.v[j];
                residual.set(i, j, val);
            }
        }
        residual = clip_nonneg(&residual);
        observer.on_deflation(k, &residual);
        statuses.push(outcome.status);
        deltas.push(outcome.deltas);
    }

    Ok(Factorization {
        factors: FactorPair::from_parts_unchecked(u_mat, v_mat),
        statuses,
        deltas,
        exhausted_early,
    })
}
