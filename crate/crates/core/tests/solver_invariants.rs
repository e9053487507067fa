//! Invariants of the sequential solver and the HALS baselines on the
//! synthetic benchmark.

use pnmu::hals::{hals_nmf, refit_fixed_support, sparse_nmf, HalsConfig};
use pnmu::nmu::{
    factorize_observed, nmu_rank_one_init, rank_one_nmu, rank_one_pnmu, IterationSnapshot,
    SolverObserver,
};
use pnmu::synthetic::generate;
use pnmu::{factorize, DenseMatrix, GridShape, NeighborMatrix, PnmuConfig, SyntheticSpec, Variant};
use proptest::prelude::*;

const VARIANTS: [Variant; 4] = [Variant::Nmu, Variant::Lnmu, Variant::Snmu, Variant::Pnmu];

fn grid() -> GridShape {
    GridShape::new(10, 14).unwrap()
}

fn noisy(g: f64, p: f64, seed: u64) -> DenseMatrix {
    generate(&SyntheticSpec::with_noise(g, p, seed))
        .unwrap()
        .m_noisy
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Default)]
struct FeasibilityLog {
    iterations: usize,
    deflations: usize,
    violations: Vec<String>,
}

impl SolverObserver for FeasibilityLog {
    fn on_iteration(&mut self, s: &IterationSnapshot<'_>) {
        self.iterations += 1;
        let st = s.state;
        let tag = |what: &str| format!("factor {} t {}: {what}", s.factor, s.t);
        if st.x.iter().any(|&v| v < 0.0) {
            self.violations.push(tag("x has a negative entry"));
        }
        if norm(&st.x) > 1.0 {
            self.violations.push(tag(&format!("|x| = {}", norm(&st.x))));
        }
        if st.y.iter().any(|&v| v < 0.0) {
            self.violations.push(tag("y has a negative entry"));
        }
        let ny = norm(&st.y);
        if ny != 0.0 && (ny - 1.0).abs() > 1e-12 {
            self.violations.push(tag(&format!("|y| = {ny}")));
        }
        if st.lambda.as_slice().iter().any(|&v| v < 0.0) {
            self.violations
                .push(tag("multipliers have a negative entry"));
        }
    }

    fn on_deflation(&mut self, factor: usize, residual: &DenseMatrix) {
        self.deflations += 1;
        if residual.as_slice().iter().any(|&v| v < 0.0) {
            self.violations.push(format!(
                "residual after factor {factor} has a negative entry"
            ));
        }
    }
}

#[test]
fn iterates_stay_feasible_and_residuals_nonnegative() {
    let cfg = PnmuConfig {
        maxiter: 100,
        ..PnmuConfig::default()
    };
    for (g, p, seed) in [(0.0, 0.0, 0), (0.2, 0.05, 1), (0.3, 0.15, 2), (1.0, 0.3, 3)] {
        let m = noisy(g, p, seed);
        for variant in VARIANTS {
            let mut log = FeasibilityLog::default();
            let out = factorize_observed(&m, grid(), 4, &cfg, variant, &mut log).unwrap();
            assert!(
                log.violations.is_empty(),
                "{variant:?} at g={g} p={p}: {:?}",
                &log.violations[..log.violations.len().min(5)]
            );
            assert_eq!(log.deflations, 4);
            assert_eq!(log.iterations, 4 * cfg.maxiter);
            assert!(out.factors.u().is_nonnegative() && out.factors.v().is_nonnegative());
        }
    }
}

#[test]
fn pnmu_without_priors_equals_plain_path_bitwise() {
    let cfg = PnmuConfig {
        phi_prime: 0.0,
        mu_prime: 0.0,
        maxiter: 200,
        ..PnmuConfig::default()
    };
    for seed in 0..3 {
        let m = noisy(0.2, 0.05, seed);
        let cfg = PnmuConfig {
            seed,
            ..cfg.clone()
        };
        let prior = factorize(&m, grid(), 4, &cfg, Variant::Pnmu).unwrap();
        let plain = factorize(&m, grid(), 4, &cfg, Variant::Nmu).unwrap();
        let bits = |a: &DenseMatrix| a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(prior.factors.u()), bits(plain.factors.u()));
        assert_eq!(bits(prior.factors.v()), bits(plain.factors.v()));
        assert_eq!(prior.deltas, plain.deltas);

        let nm = NeighborMatrix::build(grid());
        let a = rank_one_pnmu(&m, &nm, &cfg).unwrap();
        let b = rank_one_nmu(&m, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn iterates_stabilize_on_the_synthetic_benchmark() {
    let cfg = PnmuConfig::default();
    for (g, p) in [(0.0, 0.0), (0.2, 0.05), (0.3, 0.15)] {
        for seed in 0..3 {
            let m = noisy(g, p, seed);
            let out = factorize(&m, grid(), 4, &cfg, Variant::Pnmu).unwrap();
            for (k, deltas) in out.deltas.iter().enumerate() {
                assert_eq!(deltas.len(), cfg.maxiter);
                let settled = deltas.iter().position(|d| d.dx < 1e-3 && d.dy < 1e-3);
                assert!(
                    settled.is_some_and(|t| t + 1 < cfg.maxiter),
                    "g={g} p={p} seed={seed} factor {k} never settled; last {:?}",
                    deltas.last()
                );
            }
        }
    }
}

/// Best feasible rank-one underapproximation of a 2×2 matrix over unit-norm
/// nonnegative `u`, `v` on a 0.01-radian grid; returns the scale `σ`.
fn grid_search_underapproximation(m: &DenseMatrix) -> (f64, f64) {
    let steps = (std::f64::consts::FRAC_PI_2 / 0.01).ceil() as usize;
    let angle = |i: usize| (i as f64 * 0.01).min(std::f64::consts::FRAC_PI_2);
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let u = [angle(i).cos(), angle(i).sin()];
        for j in 0..=steps {
            let v = [angle(j).cos(), angle(j).sin()];
            let mut sigma = f64::INFINITY;
            for a in 0..2 {
                for b in 0..2 {
                    if u[a] * v[b] > 1e-12 {
                        sigma = sigma.min(m.get(a, b) / (u[a] * v[b]));
                    }
                }
            }
            let mut err = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    err += (m.get(a, b) - sigma * u[a] * v[b]).powi(2);
                }
            }
            if err < best.1 {
                best = (sigma, err);
            }
        }
    }
    best
}

#[test]
fn init_on_identity_matches_grid_search() {
    let m = DenseMatrix::identity(2);
    let (sigma_oracle, err_oracle) = grid_search_underapproximation(&m);
    assert!((sigma_oracle - 1.0).abs() < 1e-12 && (err_oracle - 1.0).abs() < 1e-12);
    for seed in 0..5 {
        let st = nmu_rank_one_init(&m, 100, seed).unwrap();
        let mut err = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let approx = st.sigma * st.x[i] * st.y[j];
                assert!(
                    approx <= m.get(i, j) + 1e-2,
                    "seed {seed}: ({i},{j}) = {approx}"
                );
                err += (m.get(i, j) - approx).powi(2);
            }
        }
        assert!(
            (st.sigma - sigma_oracle).abs() <= 1e-2,
            "seed {seed}: sigma {}",
            st.sigma
        );
        assert!(err <= err_oracle + 1e-2);
    }
}

#[test]
fn hals_error_never_increases_between_sweeps() {
    for (g, p, seed) in [(0.0, 0.0, 0), (0.2, 0.05, 1), (0.3, 0.15, 2)] {
        let m = noisy(g, p, seed);
        let cfg = HalsConfig {
            seed,
            ..HalsConfig::default()
        };
        let out = hals_nmf(&m, 4, &cfg).unwrap();
        assert!(out.errors.len() >= 2);
        for pair in out.errors.windows(2) {
            assert!(pair[1] <= pair[0], "{} after {}", pair[1], pair[0]);
        }
    }
}

#[test]
fn refit_keeps_zero_pattern() {
    for seed in 0..4 {
        let m = noisy(0.2, 0.05, seed);
        let cfg = PnmuConfig {
            maxiter: 100,
            seed,
            ..PnmuConfig::default()
        };
        for variant in [Variant::Snmu, Variant::Pnmu] {
            let fac = factorize(&m, grid(), 4, &cfg, variant).unwrap().factors;
            let refit = refit_fixed_support(&m, &fac, 50).unwrap();
            let pairs = [(fac.u(), refit.factors.u()), (fac.v(), refit.factors.v())];
            for (before, after) in pairs {
                for (b, a) in before.as_slice().iter().zip(after.as_slice()) {
                    if *b == 0.0 {
                        assert_eq!(*a, 0.0);
                    }
                    assert!(*a >= 0.0);
                }
            }
        }
    }
}

#[test]
fn sparse_nmf_is_nonnegative_and_reports_sparsity() {
    for (target, seed) in [(30.0, 0), (60.0, 1), (75.0, 2)] {
        let m = noisy(0.2, 0.05, seed);
        let cfg = HalsConfig {
            seed,
            target_sparsity: Some(target),
            ..HalsConfig::default()
        };
        let out = sparse_nmf(&m, 4, &cfg).unwrap();
        assert!(out.factors.u().is_nonnegative() && out.factors.v().is_nonnegative());
        let reported = out
            .achieved_sparsity
            .expect("sparse variant reports sparsity");
        assert_eq!(reported, pnmu::metrics::sparsity(out.factors.u()));
        assert!(out.target_reached.is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_is_a_pure_function_of_its_spec(g in 0.0f64..1.0, p in 0.0f64..1.0, seed in any::<u64>()) {
        let spec = SyntheticSpec::with_noise(g, p, seed);
        prop_assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn residuals_nonnegative_for_any_noise(g in 0.0f64..1.0, p in 0.0f64..0.5, seed in 0u64..1000) {
        let m = noisy(g, p, seed);
        let cfg = PnmuConfig { maxiter: 10, seed, ..PnmuConfig::default() };
        let mut log = FeasibilityLog::default();
        factorize_observed(&m, grid(), 4, &cfg, Variant::Pnmu, &mut log).unwrap();
        prop_assert!(log.violations.is_empty(), "{:?}", log.violations.first());
    }
}
