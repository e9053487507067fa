//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pnmu::experiments::{run_trial, Algorithm, RunSettings, TrialScore};
use pnmu::grid::{apply_b, power_iteration, tv_penalty};
use pnmu::hals::{hals_nmf, refit_fixed_support, HalsConfig};
use pnmu::metrics::{match_cost_matrix, min_cost_assignment, relative_error};
use pnmu::nmu::{factorize_observed, IterationSnapshot, SolverObserver};
use pnmu::synthetic::generate;
use pnmu::{
    factorize, DenseMatrix, GridShape, IrwlsWeights, NeighborMatrix, PnmuConfig, SyntheticSpec,
    Variant,
};

use Algorithm::{Lnmu, Nmf, Nmu, Pnmu, Snmf, Snmu};

// criterion 1
const C1_SEEDS: u64 = 20;
const C1_PNMU_MAX: f64 = 0.5;
const C1_BASELINE_MIN: f64 = 5.0;
const C1_RUNTIME: Duration = Duration::from_secs(120);
// criterion 2
const C2_SEEDS: u64 = 10;
const C2_PHI: [f64; 4] = [0.6, 0.7, 0.8, 0.9];
const C2_MU: [f64; 3] = [0.1, 0.3, 0.5];
const C2_MAX: f64 = 1.0;
// criterion 3
const C3_SEEDS: u64 = 20;
const C3_P: f64 = 0.05;
const C3_G: [f64; 9] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
const C3_MAX: f64 = 1.0;
// criterion 4
const C4_SEEDS: u64 = 20;
const C4_G: f64 = 0.1;
const C4_P: [f64; 11] = [
    0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1,
];
const C4_MAX: f64 = 0.3;
// criterion 5
const C5_MATCH_MAX: f64 = 0.1;
const C5_ERROR_MAX: f64 = 5.0;
// criterion 7
const C7_INSTANCES: usize = 200;
const C7_MAX_RANK: usize = 6;
const C7_POWER_STEPS: usize = 50;
const C7_POWER_REL: f64 = 0.01;
const C7_MAX_PIXELS: usize = 36;
const C7_IRWLS_SAMPLES: usize = 100;
const C7_EPSILONS: [f64; 2] = [1e-2, 1e-3];
// criterion 8
const C8_SEEDS: u64 = 20;
const C8_SPARSITY_RATIO: f64 = 0.9;
const C8_COHERENCE_RATIO: f64 = 1.5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, v: &Verdict) -> bool {
    let status = if v.pass { "PASS" } else { "FAIL" };
    println!("[PRIMARY] criterion {n} ({title}): {status} - {}", v.detail);
    v.pass
}

fn settings(phi: f64, mu: f64) -> RunSettings {
    let mut s = RunSettings::default();
    s.pnmu.phi_prime = phi;
    s.pnmu.mu_prime = mu;
    s
}

/// Per-algorithm means of (match, sparsity, coherence) over seeds `0..n`.
fn means(g: f64, p: f64, n: u64, algos: &[Algorithm], st: &RunSettings) -> Vec<[f64; 3]> {
    let trials: Vec<Vec<TrialScore>> = (0..n)
        .into_par_iter()
        .map(|seed| run_trial(g, p, seed, algos, st).expect("trial runs"))
        .collect();
    (0..algos.len())
        .map(|i| {
            let avg =
                |f: fn(&TrialScore) -> f64| trials.iter().map(|t| f(&t[i])).sum::<f64>() / n as f64;
            [
                avg(|t| t.match_pct),
                avg(|t| t.sparsity_pct),
                avg(|t| t.spatial_coherence),
            ]
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let r = means(0.3, 0.15, C1_SEEDS, &[Pnmu, Nmu, Nmf], &settings(0.7, 0.5));
    let elapsed = start.elapsed();
    let (pnmu, nmu, nmf) = (r[0][0], r[1][0], r[2][0]);
    Verdict {
        pass: pnmu < C1_PNMU_MAX && nmu > C1_BASELINE_MIN && nmf > C1_BASELINE_MIN && elapsed <= C1_RUNTIME,
        detail: format!(
            "mean match PNMU {pnmu:.4}% (< {C1_PNMU_MAX}), NMU {nmu:.2}% (> {C1_BASELINE_MIN}), NMF {nmf:.2}% (> {C1_BASELINE_MIN}); runtime {:.1}s (<= {}s)",
            elapsed.as_secs_f64(),
            C1_RUNTIME.as_secs()
        ),
    }
}

fn criterion_2() -> Verdict {
    let mut worst = (0.0_f64, 0.0, 0.0);
    let mut failing = Vec::new();
    for phi in C2_PHI {
        for mu in C2_MU {
            let m = means(0.2, 0.05, C2_SEEDS, &[Pnmu], &settings(phi, mu))[0][0];
            if m >= C2_MAX {
                failing.push(format!("({phi},{mu})={m:.2}%"));
            }
            if m > worst.0 {
                worst = (m, phi, mu);
            }
        }
    }
    Verdict {
        pass: failing.is_empty(),
        detail: format!(
            "worst mean match {:.3}% at phi'={} mu'={} (< {C2_MAX} required); {} of {} cells fail {}",
            worst.0,
            worst.1,
            worst.2,
            failing.len(),
            C2_PHI.len() * C2_MU.len(),
            failing.join(" ")
        ),
    }
}

fn criterion_3() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for g in C3_G {
        let r = means(g, C3_P, C3_SEEDS, &[Pnmu, Snmf], &settings(0.7, 0.5));
        let (pnmu, snmf) = (r[0][0], r[1][0]);
        pass &= pnmu < C3_MAX && pnmu < snmf;
        parts.push(format!("g={g}: {pnmu:.3}/{snmf:.2}"));
    }
    Verdict {
        pass,
        detail: format!(
            "PNMU/SNMF mean match (PNMU < {C3_MAX} and < SNMF) {}",
            parts.join(", ")
        ),
    }
}

fn criterion_4() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in C4_P {
        let pnmu = means(C4_G, p, C4_SEEDS, &[Pnmu], &settings(0.7, 0.5))[0][0];
        pass &= pnmu < C4_MAX;
        parts.push(format!("p={p}: {pnmu:.3}"));
    }
    Verdict {
        pass,
        detail: format!("PNMU mean match (< {C4_MAX}) {}", parts.join(", ")),
    }
}

fn criterion_5() -> Verdict {
    let inst = generate(&SyntheticSpec::with_noise(0.0, 0.0, 0)).unwrap();
    let st = settings(0.7, 0.5);
    let fac = factorize(
        &inst.m_noisy,
        SyntheticSpec::default().grid,
        4,
        &st.pnmu,
        Variant::Pnmu,
    )
    .unwrap()
    .factors;
    let m = pnmu::metrics::match_score(&inst.u_true, fac.u()).unwrap();
    let err = relative_error(&inst.m_noisy, &fac).unwrap();
    Verdict {
        pass: m < C5_MATCH_MAX && err < C5_ERROR_MAX,
        detail: format!(
            "match {m:.4}% (< {C5_MATCH_MAX}), relative error {err:.3}% (< {C5_ERROR_MAX})"
        ),
    }
}

#[derive(Default)]
struct Feasibility {
    checks: usize,
    violations: usize,
}

impl SolverObserver for Feasibility {
    fn on_iteration(&mut self, s: &IterationSnapshot<'_>) {
        let st = s.state;
        let nx = st.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.checks += 1;
        if st.x.iter().any(|&v| v < 0.0)
            || nx > 1.0
            || st.lambda.as_slice().iter().any(|&v| v < 0.0)
        {
            self.violations += 1;
        }
    }

    fn on_deflation(&mut self, _factor: usize, residual: &DenseMatrix) {
        self.checks += 1;
        if residual.as_slice().iter().any(|&v| v < 0.0) {
            self.violations += 1;
        }
    }
}

fn criterion_6() -> Verdict {
    let grid = SyntheticSpec::default().grid;
    let mut solver = Feasibility::default();
    let mut hals_sweeps = 0;
    let mut hals_increases = 0;
    let mut refit_entries = 0;
    let mut refit_violations = 0;
    for seed in 0..5 {
        for (g, p) in [(0.0, 0.0), (0.2, 0.05), (0.3, 0.15)] {
            let m = generate(&SyntheticSpec::with_noise(g, p, seed))
                .unwrap()
                .m_noisy;
            let cfg = PnmuConfig {
                seed,
                ..PnmuConfig::default()
            };
            for variant in [Variant::Nmu, Variant::Lnmu, Variant::Snmu, Variant::Pnmu] {
                let fac = factorize_observed(&m, grid, 4, &cfg, variant, &mut solver)
                    .unwrap()
                    .factors;
                let refit = refit_fixed_support(&m, &fac, 50).unwrap().factors;
                for (before, after) in [(fac.u(), refit.u()), (fac.v(), refit.v())] {
                    for (b, a) in before.as_slice().iter().zip(after.as_slice()) {
                        refit_entries += 1;
                        if *b == 0.0 && *a != 0.0 {
                            refit_violations += 1;
                        }
                    }
                }
            }
            let hals = hals_nmf(
                &m,
                4,
                &HalsConfig {
                    seed,
                    ..HalsConfig::default()
                },
            )
            .unwrap();
            for w in hals.errors.windows(2) {
                hals_sweeps += 1;
                if w[1] > w[0] {
                    hals_increases += 1;
                }
            }
        }
    }
    Verdict {
        pass: solver.violations == 0 && hals_increases == 0 && refit_violations == 0,
        detail: format!(
            "{} feasibility violations in {} solver checks, {hals_increases} HALS increases in {hals_sweeps} sweeps, {refit_violations} new nonzeros in {refit_entries} refit entries (all must be 0)",
            solver.violations, solver.checks
        ),
    }
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(r - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, r - 1);
            out.push(q);
        }
    }
    out
}

fn dense_b(nm: &NeighborMatrix, w: &IrwlsWeights) -> DMatrix<f64> {
    let n = nm.n_pixels();
    DMatrix::from_fn(n, n, |i, j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        apply_b(nm, w, &e).unwrap()[i]
    })
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut assignment_failures = 0;
    for instance in 0..C7_INSTANCES {
        let r = 1 + instance % C7_MAX_RANK;
        let n = 5 + rng.random_range(0..20);
        let mut random = |zero: f64| {
            let data = (0..n * r)
                .map(|_| {
                    if rng.random::<f64>() < zero {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            DenseMatrix::from_vec(n, r, data).unwrap()
        };
        let (t, e) = (random(0.5), random(0.3));
        let cost = match_cost_matrix(&t, &e).unwrap();
        let total = |perm: &[usize]| {
            perm.iter()
                .enumerate()
                .map(|(k, &l)| cost[k][l])
                .sum::<f64>()
        };
        let brute = permutations(r)
            .iter()
            .map(|p| total(p))
            .fold(f64::INFINITY, f64::min);
        if total(&min_cost_assignment(&cost)) != brute {
            assignment_failures += 1;
        }
    }

    let mut power_failures = Vec::new();
    let mut power_cases = 0;
    let mut worst_power = 0.0_f64;
    for h in 1..=C7_MAX_PIXELS {
        for wd in 1..=C7_MAX_PIXELS {
            let n = h * wd;
            if !(2..=C7_MAX_PIXELS).contains(&n) {
                continue;
            }
            let nm = NeighborMatrix::build(GridShape::new(h, wd).unwrap());
            let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let w = IrwlsWeights::compute(&nm, &u, 1e-3).unwrap();
            let exact = SymmetricEigen::new(dense_b(&nm, &w))
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let z0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let (lambda_hat, _) = power_iteration(&nm, &w, &z0, C7_POWER_STEPS).unwrap();
            let rel = (lambda_hat - exact).abs() / exact;
            power_cases += 1;
            worst_power = worst_power.max(rel);
            if rel > C7_POWER_REL {
                power_failures.push(format!("{h}x{wd}:{:.2}%", 100.0 * rel));
            }
        }
    }

    let nm = NeighborMatrix::build(SyntheticSpec::default().grid);
    let k = nm.n_pairs() as f64;
    let mut irwls_failures = 0;
    for eps in C7_EPSILONS {
        for _ in 0..C7_IRWLS_SAMPLES {
            let u: Vec<f64> = (0..nm.n_pixels()).map(|_| rng.random::<f64>()).collect();
            let w = IrwlsWeights::compute(&nm, &u, eps).unwrap();
            let bu = apply_b(&nm, &w, &u).unwrap();
            let quad: f64 = u.iter().zip(bu.iter()).map(|(a, b)| a * b).sum();
            if (quad - tv_penalty(&nm, &u).unwrap()).abs() > k * eps {
                irwls_failures += 1;
            }
        }
    }

    Verdict {
        pass: assignment_failures == 0 && power_failures.is_empty() && irwls_failures == 0,
        detail: format!(
            "assignment {assignment_failures}/{C7_INSTANCES} non-optimal; power method ({C7_POWER_STEPS} steps) outside {}% on {}/{power_cases} grids, worst {:.2}% {}; IRWLS bound violated {irwls_failures}/{}",
            100.0 * C7_POWER_REL,
            power_failures.len(),
            100.0 * worst_power,
            power_failures.join(" "),
            C7_IRWLS_SAMPLES * C7_EPSILONS.len()
        ),
    }
}

fn criterion_8() -> Verdict {
    let r = means(
        0.2,
        0.05,
        C8_SEEDS,
        &[Nmu, Lnmu, Snmu, Pnmu],
        &settings(0.7, 0.5),
    );
    let [nmu, lnmu, snmu, pnmu] = [r[0], r[1], r[2], r[3]];
    let pass = snmu[1] > nmu[1]
        && lnmu[2] < nmu[2]
        && pnmu[1] >= C8_SPARSITY_RATIO * snmu[1]
        && pnmu[2] <= C8_COHERENCE_RATIO * lnmu[2];
    Verdict {
        pass,
        detail: format!(
            "s(U): NMU {:.1}, SNMU {:.1}, PNMU {:.1} (>= {C8_SPARSITY_RATIO}*SNMU); l(U): NMU {:.2}, LNMU {:.2}, PNMU {:.2} (<= {C8_COHERENCE_RATIO}*LNMU)",
            nmu[1], snmu[1], pnmu[1], nmu[2], lnmu[2], pnmu[2]
        ),
    }
}

fn run_cli(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pnmu"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Verdict {
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "synth", "--g", "0.3", "--p", "0.15", "--seed", "7", "--out", "s",
        ],
        vec![
            "factorize",
            "--input",
            "s_M.csv",
            "--grid",
            "10",
            "14",
            "--rank",
            "4",
            "--algo",
            "pnmu",
            "--truth",
            "s_Utrue.csv",
            "--improve",
            "--out",
            "pnmu",
        ],
        vec![
            "factorize",
            "--input",
            "s_M.csv",
            "--grid",
            "10",
            "14",
            "--rank",
            "4",
            "--algo",
            "nmf",
            "--truth",
            "s_Utrue.csv",
            "--out",
            "nmf",
        ],
        vec![
            "factorize",
            "--input",
            "s_M.csv",
            "--grid",
            "10",
            "14",
            "--rank",
            "4",
            "--algo",
            "snmf",
            "--target-sparsity",
            "60",
            "--out",
            "snmf",
        ],
        vec![
            "factorize",
            "--input",
            "s_M.csv",
            "--grid",
            "10",
            "14",
            "--rank",
            "4",
            "--algo",
            "lnmu",
            "--maxiter",
            "100",
            "--out",
            "lnmu",
        ],
        vec![
            "sweep",
            "--mode",
            "joint",
            "--q-max",
            "2",
            "--trials",
            "2",
            "--maxiter",
            "50",
            "--out",
            "joint.csv",
        ],
    ];
    let run_all = || {
        let dir = tempfile::tempdir().unwrap();
        let ok = commands.iter().all(|c| run_cli(c, dir.path()));
        (ok, tree_bytes(dir.path()))
    };
    let (ok_a, a) = run_all();
    let (ok_b, b) = run_all();
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    Verdict {
        pass: ok_a && ok_b && a.len() == b.len() && differing.is_empty(),
        detail: format!(
            "{} commands run twice, {} artifacts compared, {} differ {}",
            commands.len(),
            a.len(),
            differing.len(),
            differing.join(" ")
        ),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("synthetic recovery at g=0.3, p=0.15", criterion_1),
        ("parameter grid at g=0.2, p=0.05", criterion_2),
        ("Gaussian sweep", criterion_3),
        ("salt-and-pepper sweep", criterion_4),
        ("noiseless sanity", criterion_5),
        ("invariant suite", criterion_6),
        ("oracle equivalences", criterion_7),
        ("trend criteria", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (title, run)) in criteria.iter().enumerate() {
        if !report(i + 1, title, &run()) {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: criteria {failed:?} fail");
        std::process::exit(1);
    }
}
