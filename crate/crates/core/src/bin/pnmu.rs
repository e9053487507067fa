//! `pnmu` command-line tool: factorize a pixel-by-band CSV, generate
//! synthetic scenes, and run noise sweeps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pnmu::experiments::{
    inclusive_range, run_algorithm, run_sweep, Algorithm, RunSettings, SweepMode, SweepRow,
    SweepSpec,
};
use pnmu::io::{file_digest, read_matrix_csv, write_json, write_matrix_csv, write_pgm};
use pnmu::linalg::clip_nonneg;
use pnmu::metrics::{match_score, relative_error, sparsity, spatial_coherence, MetricsReport};
use pnmu::synthetic::generate;
use pnmu::{refit_fixed_support, GridShape, NeighborMatrix, PnmuConfig, PnmuError, SyntheticSpec};

/// Sweeps of the fixed-support refit behind `--improve`.
const IMPROVE_SWEEPS: usize = 200;

#[derive(Parser, Debug)]
#[command(
    name = "pnmu",
    version,
    about = "Nonnegative matrix underapproximation with sparsity and spatial priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factorize a pixels × bands CSV matrix.
    Factorize(FactorizeArgs),
    /// Write a synthetic hyperspectral scene and its ground truth.
    Synth(SynthArgs),
    /// Average match over seeded synthetic scenes for a range of noise levels.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Sparsity weight φ′ in [0, 1].
    #[arg(long = "phi")]
    phi: Option<f64>,
    /// Spatial weight μ′ in [0, 1].
    #[arg(long = "mu")]
    mu: Option<f64>,
    /// Outer iterations per rank-one factor.
    #[arg(long, default_value_t = 500)]
    maxiter: usize,
    /// Power-method and ascent steps per outer iteration.
    #[arg(long, default_value_t = 10)]
    inner: usize,
    /// Iterations of the plain NMU initializer.
    #[arg(long, default_value_t = PnmuConfig::default().init_iter)]
    init_iter: usize,
    /// IRWLS smoothing constant.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn settings(&self) -> RunSettings {
        let defaults = PnmuConfig::default();
        RunSettings {
            pnmu: PnmuConfig {
                phi_prime: self.phi.unwrap_or(defaults.phi_prime),
                mu_prime: self.mu.unwrap_or(defaults.mu_prime),
                epsilon: self.epsilon,
                maxiter: self.maxiter,
                inner_iter: self.inner,
                init_iter: self.init_iter,
                seed: self.seed,
            },
            ..RunSettings::default()
        }
    }
}

#[derive(Args, Debug)]
struct FactorizeArgs {
    /// Headerless CSV, one row per pixel (column-major pixel order).
    #[arg(long)]
    input: PathBuf,
    /// Image height and width.
    #[arg(long, num_args = 2, value_names = ["H", "W"], required = true)]
    grid: Vec<usize>,
    #[arg(long = "algo", default_value = "pnmu")]
    algo: String,
    #[arg(long)]
    rank: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Percentage of zeros SNMF aims for.
    #[arg(long)]
    target_sparsity: Option<f64>,
    /// Replace negative input entries by zero before factorizing.
    #[arg(long)]
    clip_input: bool,
    /// Also report the error after refitting over the nonzero entries.
    #[arg(long)]
    improve: bool,
    /// Ground-truth abundance CSV; adds the match score.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Record wall-clock times (makes metrics.json run-dependent).
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    g: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX_M.csv, PREFIX_Utrue.csv, PREFIX_Vtrue.csv.
    #[arg(long, default_value = "synth")]
    out: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// gaussian | saltpepper | joint | grid
    #[arg(long)]
    mode: String,
    /// Fixed Gaussian level (saltpepper and grid modes).
    #[arg(long)]
    g: Option<f64>,
    /// Fixed salt-and-pepper density (gaussian and grid modes).
    #[arg(long)]
    p: Option<f64>,
    /// START:STOP:STEP for g in gaussian mode.
    #[arg(long, default_value = "0:1:0.05")]
    g_range: String,
    /// START:STOP:STEP for p in saltpepper mode.
    #[arg(long, default_value = "0:1:0.01")]
    p_range: String,
    /// Largest q in joint mode (g = 0.02q, p = 0.01q).
    #[arg(long, default_value_t = 50)]
    q_max: usize,
    /// START:STOP:STEP for φ′ in grid mode.
    #[arg(long, default_value = "0:1:0.1")]
    phi_range: String,
    /// START:STOP:STEP for μ′ in grid mode.
    #[arg(long, default_value = "0:1:0.1")]
    mu_range: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Comma-separated algorithm list; defaults to all (PNMU only in grid mode).
    #[arg(long)]
    algos: Option<String>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FileRecord {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    algorithm: Algorithm,
    rank: usize,
    grid: [usize; 2],
    settings: RunSettings,
    clip_input: bool,
    improve: bool,
    seed: u64,
    input: FileRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<FileRecord>,
    artifacts: Vec<String>,
    wall_clock_seconds: f64,
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn cmd_factorize(args: FactorizeArgs) -> Result<(), PnmuError> {
    let started = Instant::now();
    let algorithm: Algorithm = args.algo.parse()?;
    if args.solver.phi.is_some() && !algorithm.uses_phi() {
        warn(&format!("--phi has no effect with --algo {algorithm}"));
    }
    if args.solver.mu.is_some() && !algorithm.uses_mu() {
        warn(&format!("--mu has no effect with --algo {algorithm}"));
    }
    if args.target_sparsity.is_some() && algorithm != Algorithm::Snmf {
        warn(&format!(
            "--target-sparsity has no effect with --algo {algorithm}"
        ));
    }
    let mut settings = args.solver.settings();
    settings.target_sparsity = args.target_sparsity;
    settings.pnmu.validate()?;
    if let Some(t) = args.target_sparsity {
        if !(0.0..=100.0).contains(&t) {
            return Err(PnmuError::Parameter(format!(
                "target sparsity {t} outside [0, 100]"
            )));
        }
    }
    if args.rank == 0 {
        return Err(PnmuError::Parameter("rank must be at least 1".into()));
    }
    let grid = GridShape::new(args.grid[0], args.grid[1])?;

    let raw = read_matrix_csv(&args.input)?;
    let m = if args.clip_input {
        clip_nonneg(&raw)
    } else {
        raw
    };
    if m.n_rows() != grid.n_pixels() {
        return Err(PnmuError::Parameter(format!(
            "grid {}x{} has {} pixels but the input has {} rows",
            grid.height(),
            grid.width(),
            grid.n_pixels(),
            m.n_rows()
        )));
    }
    let truth = args.truth.as_deref().map(read_matrix_csv).transpose()?;

    let solve_started = Instant::now();
    let factors = run_algorithm(algorithm, &m, grid, args.rank, &settings)?;
    let runtime = solve_started.elapsed().as_secs_f64();

    let nm = NeighborMatrix::build(grid);
    let improved_error_pct = if args.improve {
        let refit = refit_fixed_support(&m, &factors, IMPROVE_SWEEPS)?;
        Some(relative_error(&m, &refit.factors)?)
    } else {
        None
    };
    let report = MetricsReport {
        algorithm: algorithm.name().to_string(),
        rank: args.rank,
        phi_prime: settings.pnmu.phi_prime,
        mu_prime: settings.pnmu.mu_prime,
        seed: settings.pnmu.seed,
        relative_error_pct: relative_error(&m, &factors)?,
        improved_error_pct,
        sparsity_pct: sparsity(factors.u()),
        spatial_coherence: spatial_coherence(&nm, factors.u())?,
        match_pct: truth
            .as_ref()
            .map(|t| match_score(t, factors.u()))
            .transpose()?,
        runtime_seconds: if args.record_timing { runtime } else { 0.0 },
    };

    fs::create_dir_all(&args.out).map_err(|source| PnmuError::Io {
        path: args.out.clone(),
        source,
    })?;
    let mut artifacts = vec![
        "U.csv".to_string(),
        "V.csv".to_string(),
        "metrics.json".to_string(),
    ];
    write_matrix_csv(factors.u(), &args.out.join("U.csv"))?;
    write_matrix_csv(factors.v(), &args.out.join("V.csv"))?;
    write_json(&report, &args.out.join("metrics.json"))?;
    for k in 0..args.rank {
        let name = format!("U_col{}.pgm", k + 1);
        write_pgm(&factors.u().column(k), grid, &args.out.join(&name))?;
        artifacts.push(name);
    }

    let manifest = RunManifest {
        command: std::env::args().collect(),
        algorithm,
        rank: args.rank,
        grid: [grid.height(), grid.width()],
        seed: settings.pnmu.seed,
        settings,
        clip_input: args.clip_input,
        improve: args.improve,
        input: FileRecord {
            sha256: file_digest(&args.input)?,
            path: args.input.clone(),
        },
        truth: match &args.truth {
            Some(p) => Some(FileRecord {
                sha256: file_digest(p)?,
                path: p.clone(),
            }),
            None => None,
        },
        artifacts,
        wall_clock_seconds: if args.record_timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    };
    write_json(&manifest, &args.out.join("run_manifest.json"))
}

fn cmd_synth(args: SynthArgs) -> Result<(), PnmuError> {
    let instance = generate(&SyntheticSpec::with_noise(args.g, args.p, args.seed))?;
    let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}.csv", args.out));
    if let Some(parent) = path("M").parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| PnmuError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    write_matrix_csv(&instance.m_noisy, &path("M"))?;
    write_matrix_csv(&instance.u_true, &path("Utrue"))?;
    write_matrix_csv(&instance.v_true, &path("Vtrue"))
}

fn parse_range(text: &str, flag: &str) -> Result<Vec<f64>, PnmuError> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|s| s.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[start, stop, step]) => inclusive_range(start, stop, step),
        Some(&[single]) => Ok(vec![single]),
        _ => Err(PnmuError::Parameter(format!(
            "{flag} expects START:STOP:STEP, got '{text}'"
        ))),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), PnmuError> {
    let mode: SweepMode = args.mode.parse()?;
    let base = args.solver.settings();
    let mut spec = match mode {
        SweepMode::Gaussian => SweepSpec::gaussian(
            args.p.unwrap_or(0.05),
            parse_range(&args.g_range, "--g-range")?,
            base,
        ),
        SweepMode::Saltpepper => SweepSpec::saltpepper(
            args.g.unwrap_or(0.1),
            parse_range(&args.p_range, "--p-range")?,
            base,
        ),
        SweepMode::Joint => SweepSpec::joint(args.q_max, base),
        SweepMode::Grid => SweepSpec::grid(
            args.g.unwrap_or(0.2),
            args.p.unwrap_or(0.05),
            &parse_range(&args.phi_range, "--phi-range")?,
            &parse_range(&args.mu_range, "--mu-range")?,
            base,
        ),
    };
    spec.trials = args.trials;
    if let Some(list) = &args.algos {
        spec.algorithms = list
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()?;
    }

    let rows = run_sweep(&spec)?;
    let failed: usize = rows.iter().map(|r| r.failures).sum();
    let total = rows.len() * spec.trials;
    if failed > 0 {
        warn(&format!(
            "{failed} of {total} trials failed; see the failures column"
        ));
    }
    let mut text = String::from(SweepRow::CSV_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|source| PnmuError::Io {
            path: path.clone(),
            source,
        })?,
        None => print!("{text}"),
    }
    if failed == total {
        return Err(PnmuError::UndefinedMetric("every trial failed".into()));
    }
    Ok(())
}

fn configure_threads() -> Result<(), PnmuError> {
    let Ok(value) = std::env::var("PNMU_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        PnmuError::Parameter(format!(
            "PNMU_THREADS must be a positive integer, got '{value}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| PnmuError::Parameter(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Factorize(a) => cmd_factorize(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
