//! Algorithm dispatch and the seeded noise-sweep harness on synthetic scenes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PnmuError, Result};
use crate::grid::{GridShape, NeighborMatrix};
use crate::hals::{hals_nmf, sparse_nmf, HalsConfig};
use crate::linalg::{DenseMatrix, FactorPair};
use crate::metrics::{match_score, sparsity, spatial_coherence};
use crate::nmu::{factorize, PnmuConfig, Variant};
use crate::synthetic::{generate, SyntheticSpec};

/// Every algorithm the CLI and harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nmf,
    Snmf,
    Nmu,
    Lnmu,
    Snmu,
    Pnmu,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Nmf,
        Algorithm::Snmf,
        Algorithm::Nmu,
        Algorithm::Lnmu,
        Algorithm::Snmu,
        Algorithm::Pnmu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Nmf => "nmf",
            Algorithm::Snmf => "snmf",
            Algorithm::Nmu => "nmu",
            Algorithm::Lnmu => "lnmu",
            Algorithm::Snmu => "snmu",
            Algorithm::Pnmu => "pnmu",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Algorithm::Nmu => Some(Variant::Nmu),
            Algorithm::Lnmu => Some(Variant::Lnmu),
            Algorithm::Snmu => Some(Variant::Snmu),
            Algorithm::Pnmu => Some(Variant::Pnmu),
            Algorithm::Nmf | Algorithm::Snmf => None,
        }
    }

    /// Whether `--phi` affects this algorithm.
    pub fn uses_phi(self) -> bool {
        matches!(self, Algorithm::Snmu | Algorithm::Pnmu)
    }

    /// Whether `--mu` affects this algorithm.
    pub fn uses_mu(self) -> bool {
        matches!(self, Algorithm::Lnmu | Algorithm::Pnmu)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = PnmuError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PnmuError::parameter(format!("unknown algorithm '{s}'")))
    }
}

/// Settings shared by every algorithm in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub pnmu: PnmuConfig,
    pub hals_max_outer: usize,
    pub hals_tol: f64,
    /// Target zeros percentage for SNMF.
    pub target_sparsity: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            pnmu: PnmuConfig::default(),
            hals_max_outer: 500,
            hals_tol: 1e-6,
            target_sparsity: None,
        }
    }
}

impl RunSettings {
    fn hals(&self, target_sparsity: Option<f64>) -> HalsConfig {
        HalsConfig {
            max_outer: self.hals_max_outer,
            tol: self.hals_tol,
            seed: self.pnmu.seed,
            target_sparsity,
        }
    }
}

/// Runs one algorithm on `m`.
pub fn run_algorithm(
    algorithm: Algorithm,
    m: &DenseMatrix,
    grid: GridShape,
    r: usize,
    settings: &RunSettings,
) -> Result<FactorPair> {
    match algorithm.variant() {
        Some(variant) => Ok(factorize(m, grid, r, &settings.pnmu, variant)?.factors),
        None if algorithm == Algorithm::Nmf => Ok(hals_nmf(m, r, &settings.hals(None))?.factors),
        None => {
            let target = settings
                .target_sparsity
                .ok_or_else(|| PnmuError::parameter("snmf requires a target sparsity"))?;
            Ok(sparse_nmf(m, r, &settings.hals(Some(target)))?.factors)
        }
    }
}

/// Per-algorithm scores on one synthetic instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub algorithm: Algorithm,
    pub match_pct: f64,
    pub sparsity_pct: f64,
    pub spatial_coherence: f64,
}

/// Generates the instance for `(g, p, seed)` and scores each algorithm on it.
///
/// SNMF without an explicit target uses the sparsity PNMU reaches on the same
/// instance (PNMU is run for that purpose if it is not in the list).
pub fn run_trial(
    g: f64,
    p: f64,
    seed: u64,
    algorithms: &[Algorithm],
    base: &RunSettings,
) -> Result<Vec<TrialScore>> {
    let inst = generate(&SyntheticSpec::with_noise(g, p, seed))?;
    let grid = SyntheticSpec::default().grid;
    let nm = NeighborMatrix::build(grid);
    let r = inst.u_true.n_cols();
    let mut settings = base.clone();
    settings.pnmu.seed = seed;

    let score = |algorithm: Algorithm, f: &FactorPair| -> Result<TrialScore> {
        Ok(TrialScore {
            algorithm,
            match_pct: match_score(&inst.u_true, f.u())?,
            sparsity_pct: sparsity(f.u()),
            spatial_coherence: spatial_coherence(&nm, f.u())?,
        })
    };

    let mut pnmu_result: Option<TrialScore> = None;
    let needs_pnmu_target =
        algorithms.contains(&Algorithm::Snmf) && settings.target_sparsity.is_none();
    if algorithms.contains(&Algorithm::Pnmu) || needs_pnmu_target {
        let f = run_algorithm(Algorithm::Pnmu, &inst.m_noisy, grid, r, &settings)?;
        pnmu_result = Some(score(Algorithm::Pnmu, &f)?);
    }

    let mut out = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        if algorithm == Algorithm::Pnmu {
            out.push(pnmu_result.expect("computed above"));
            continue;
        }
        let mut s = settings.clone();
        if algorithm == Algorithm::Snmf && s.target_sparsity.is_none() {
            s.target_sparsity = pnmu_result.map(|p| p.sparsity_pct);
        }
        let f = run_algorithm(algorithm, &inst.m_noisy, grid, r, &s)?;
        out.push(score(algorithm, &f)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Vary `g` at fixed `p`.
    Gaussian,
    /// Vary `p` at fixed `g`.
    Saltpepper,
    /// `g = 0.02 q`, `p = 0.01 q`.
    Joint,
    /// Vary `(φ′, μ′)` at fixed noise.
    Grid,
}

impl FromStr for SweepMode {
    type Err = PnmuError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(SweepMode::Gaussian),
            "saltpepper" => Ok(SweepMode::Saltpepper),
            "joint" => Ok(SweepMode::Joint),
            "grid" => Ok(SweepMode::Grid),
            _ => Err(PnmuError::parameter(format!("unknown sweep mode '{s}'"))),
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Gaussian => "gaussian",
            SweepMode::Saltpepper => "saltpepper",
            SweepMode::Joint => "joint",
            SweepMode::Grid => "grid",
        })
    }
}

/// One evaluated configuration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub g: f64,
    pub p: f64,
    pub phi_prime: f64,
    pub mu_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub points: Vec<SweepPoint>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub base: RunSettings,
    pub base_seed: u64,
}

/// `start, start+step, …` up to `stop` inclusive, rounded to 1e-9 to absorb drift.
pub fn inclusive_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(PnmuError::parameter(format!(
            "invalid range {start}:{stop}:{step}"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

impl SweepSpec {
    /// `p` fixed, `g = 0, 0.05, …, 1`.
    pub fn gaussian(p: f64, g_values: Vec<f64>, base: RunSettings) -> Self {
        let points = g_values
            .into_iter()
            .map(|g| SweepPoint {
                g,
                p,
                phi_prime: base.pnmu.phi_prime,
                mu_prime: base.pnmu.mu_prime,
            })
            .collect();
        Self::new(SweepMode::Gaussian, points, base)
    }

    pub fn saltpepper(g: f64, p_values: Vec<f64>, base: RunSettings) -> Self {
        let points = p_values
            .into_iter()
            .map(|p| SweepPoint {
                g,
                p,
                phi_prime: base.pnmu.phi_prime,
                mu_prime: base.pnmu.mu_prime,
            })
            .collect();
        Self::new(SweepMode::Saltpepper, points, base)
    }

    pub fn joint(q_max: usize, base: RunSettings) -> Self {
        let points = (0..=q_max)
            .map(|q| SweepPoint {
                g: ((0.02 * q as f64) * 1e9).round() / 1e9,
                p: ((0.01 * q as f64) * 1e9).round() / 1e9,
                phi_prime: base.pnmu.phi_prime,
                mu_prime: base.pnmu.mu_prime,
            })
            .collect();
        Self::new(SweepMode::Joint, points, base)
    }

    pub fn grid(g: f64, p: f64, phi_values: &[f64], mu_values: &[f64], base: RunSettings) -> Self {
        let points = phi_values
            .iter()
            .flat_map(|&phi_prime| {
                mu_values.iter().map(move |&mu_prime| SweepPoint {
                    g,
                    p,
                    phi_prime,
                    mu_prime,
                })
            })
            .collect();
        let mut spec = Self::new(SweepMode::Grid, points, base);
        spec.algorithms = vec![Algorithm::Pnmu];
        spec
    }

    fn new(mode: SweepMode, points: Vec<SweepPoint>, base: RunSettings) -> Self {
        SweepSpec {
            mode,
            points,
            trials: 20,
            algorithms: Algorithm::ALL.to_vec(),
            base_seed: base.pnmu.seed,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(PnmuError::parameter("sweep has no points"));
        }
        if self.trials == 0 {
            return Err(PnmuError::parameter("sweep needs at least one trial"));
        }
        if self.algorithms.is_empty() {
            return Err(PnmuError::parameter("sweep has no algorithms"));
        }
        for pt in &self.points {
            if !(0.0..=1.0).contains(&pt.p) || !(pt.g >= 0.0) {
                return Err(PnmuError::parameter(format!(
                    "noise level g={} p={} out of range",
                    pt.g, pt.p
                )));
            }
        }
        self.base.pnmu.validate()
    }
}

/// Aggregate over the trials of one (point, algorithm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub g: f64,
    pub p: f64,
    pub phi_prime: f64,
    pub mu_prime: f64,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub mean_match_pct: f64,
    pub std_match_pct: f64,
    pub mean_sparsity_pct: f64,
    pub mean_spatial_coherence: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "mode,g,p,phi_prime,mu_prime,algorithm,trials,failures,mean_match_pct,std_match_pct,mean_sparsity_pct,mean_spatial_coherence";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.mode,
            self.g,
            self.p,
            self.phi_prime,
            self.mu_prime,
            self.algorithm,
            self.trials,
            self.failures,
            self.mean_match_pct,
            self.std_match_pct,
            self.mean_sparsity_pct,
            self.mean_spatial_coherence
        )
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every (point, trial) cell, in parallel on the current rayon pool,
/// and aggregates rows in point-major, algorithm-minor order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.points.len())
        .flat_map(|pi| (0..spec.trials).map(move |t| (pi, t)))
        .collect();
    let results: Vec<Result<Vec<TrialScore>>> = cells
        .par_iter()
        .map(|&(pi, t)| {
            let pt = spec.points[pi];
            let mut base = spec.base.clone();
            base.pnmu.phi_prime = pt.phi_prime;
            base.pnmu.mu_prime = pt.mu_prime;
            run_trial(
                pt.g,
                pt.p,
                spec.base_seed + t as u64,
                &spec.algorithms,
                &base,
            )
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.points.len() * spec.algorithms.len());
    for (pi, pt) in spec.points.iter().enumerate() {
        let per_point = &results[pi * spec.trials..(pi + 1) * spec.trials];
        for (ai, &algorithm) in spec.algorithms.iter().enumerate() {
            let ok: Vec<&TrialScore> = per_point
                .iter()
                .filter_map(|r| r.as_ref().ok().map(|s| &s[ai]))
                .collect();
            let matches: Vec<f64> = ok.iter().map(|s| s.match_pct).collect();
            let (mean, std) = mean_std(&matches);
            let (sp, _) = mean_std(&ok.iter().map(|s| s.sparsity_pct).collect::<Vec<_>>());
            let (co, _) = mean_std(&ok.iter().map(|s| s.spatial_coherence).collect::<Vec<_>>());
            rows.push(SweepRow {
                mode: spec.mode,
                g: pt.g,
                p: pt.p,
                phi_prime: pt.phi_prime,
                mu_prime: pt.mu_prime,
                algorithm,
                trials: spec.trials,
                failures: spec.trials - ok.len(),
                mean_match_pct: mean,
                std_match_pct: std,
                mean_sparsity_pct: sp,
                mean_spatial_coherence: co,
            });
        }
    }
    Ok(rows)
}
