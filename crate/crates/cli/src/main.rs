//! `sqsk`: sketched square-root LASSO toolkit.
//!
//! Subcommands: `sketch`, `solve`, `cv`, `loo`, `topic`, `bench`, `profile`.
//! Every report is a single JSON document with a top-level `schema_version`;
//! exit code 0 on success, 2 on input errors, 3 on solver non-convergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sqsk_core::bench::{cv_bench, run_bench, BenchConfig, CvBenchConfig};
use sqsk_core::data::{synthetic, Dataset};
use sqsk_core::io;
use sqsk_core::multi::{self, DriverConfig};
use sqsk_core::nonrobust::{self, ProfileMode};
use sqsk_core::reduction;
use sqsk_core::sketch::{power_sketch, sketch_error, Sketch};
use sqsk_core::solver::{self, SolveStatus, SolverConfig};
use sqsk_core::Error;

#[derive(Parser)]
#[command(
    name = "sqsk",
    about = "Solve many related square-root LASSO problems fast via one low-rank sketch",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a rank-k sketch of a dataset and cache it.
    Sketch(SketchArgs),
    /// Solve the robust sketched square-root LASSO for one or more λ.
    Solve(SolveArgs),
    /// K-fold cross-validation over a λ grid on one shared sketch.
    Cv(CvArgs),
    /// Leave-one-out analysis on one shared sketch.
    Loo(LooArgs),
    /// Topic imaging: rank the neighbors of query features.
    Topic(TopicArgs),
    /// Timing benchmark of the sketched pipeline against the full solver.
    Bench(BenchArgs),
    /// Per-λ cardinality profile of the robust or non-robust model.
    Profile(ProfileArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset file.
    #[arg(long, required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    /// Input format.
    #[arg(long, value_enum, default_value = "libsvm")]
    format: Format,
    /// Generate i.i.d. gaussian data "n,m" instead of reading a file.
    #[arg(long, value_name = "N,M", conflicts_with = "input")]
    synthetic: Option<String>,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative duality-gap target.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Newton iterations per barrier stage.
    #[arg(long, default_value_t = 100)]
    max_newton: usize,
    /// Barrier multiplier between stages.
    #[arg(long, default_value_t = 10.0)]
    mu: f64,
    /// Seed for sketching, fold shuffling and synthetic data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_newton: self.max_newton,
            mu: self.mu,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SketchArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Sketch rank k.
    #[arg(long, default_value_t = 25)]
    rank: usize,
    /// Subspace-iteration passes.
    #[arg(long, default_value_t = 4)]
    power_iters: usize,
    /// Power-iteration passes for the spectral error estimate.
    #[arg(long, default_value_t = 20)]
    error_probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the binary sketch.
    #[arg(long)]
    sketch_cache: PathBuf,
    /// Optional JSON report destination (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    /// Robustness radius ε; defaults to the measured sketch spectral error.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Single value or comma-separated grid.
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    /// Apply safe feature elimination before solving.
    #[arg(long)]
    screen: bool,
    /// Reuse (or create) a sketch cache file.
    #[arg(long)]
    sketch_cache: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    sketch_cache: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LooArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Regularization weight (single value).
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    sketch_cache: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TopicArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: f64,
    /// Query feature ids (0-based), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    query: Vec<usize>,
    /// Entries per query.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    sketch_cache: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Feature counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    sizes: Vec<usize>,
    /// Observations per feature (m = factor·n).
    #[arg(long, default_value_t = 5)]
    m_factor: usize,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the cross-validation timing comparison.
    #[arg(long)]
    cv: bool,
    #[arg(long, default_value_t = 400)]
    cv_n: usize,
    #[arg(long, default_value_t = 2000)]
    cv_m: usize,
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    #[arg(long, default_value_t = 10)]
    cv_grid: usize,
    /// Plot-ready CSV destination for the scaling curve.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    input: InputArgs,
    /// robust or nonrobust.
    #[arg(long, value_enum, default_value = "robust")]
    mode: Mode,
    #[arg(long, default_value_t = 25)]
    rank: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Plot-ready CSV destination for the per-λ series.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Robust,
    Nonrobust,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::BadSketchFile(_)
        | Error::DimensionMismatch(_) => 2,
        Error::NotSymmetric { .. }
        | Error::Indefinite { .. }
        | Error::SingularSystem(_)
        | Error::FactorizationFailed(_) => 3,
    }
}

fn driver_threads() -> usize {
    std::env::var("SQSK_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

fn load_dataset(args: &InputArgs, seed: u64) -> Result<Dataset, Error> {
    if let Some(spec) = &args.synthetic {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::InvalidArgument(
                "--synthetic expects \"n,m\"".into(),
            ));
        }
        let n: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument("bad n in --synthetic".into()))?;
        let m: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument("bad m in --synthetic".into()))?;
        return Ok(synthetic::iid_gaussian(n, m, seed));
    }
    let path = args.input.as_ref().expect("clap enforces input|synthetic");
    match args.format {
        Format::Libsvm => io::load_libsvm(path),
        Format::Csv => io::load_csv(path),
    }
}

/// Load the sketch from the cache if present, else compute (and cache).
/// Returns the sketch and the wall time spent acquiring it.
fn obtain_sketch(
    data: &Dataset,
    rank: usize,
    seed: u64,
    cache: Option<&Path>,
) -> Result<(Sketch, f64), Error> {
    let t = Instant::now();
    if let Some(path) = cache {
        if path.exists() {
            let sk = io::load_sketch(path)?;
            if sk.n() != data.n() || sk.m() != data.m() {
                return Err(Error::InvalidArgument(format!(
                    "cached sketch is {}x{} but the data is {}x{}",
                    sk.n(),
                    sk.m(),
                    data.n(),
                    data.m()
                )));
            }
            return Ok((sk, t.elapsed().as_secs_f64()));
        }
    }
    let mut sk = power_sketch(&data.x, rank, 4, seed)?;
    let (spectral, _) = sketch_error(&data.x, &sk, 20, seed)?;
    sk.set_spectral_error(spectral);
    if let Some(path) = cache {
        io::save_sketch(&sk, path)?;
    }
    Ok((sk, t.elapsed().as_secs_f64()))
}

fn emit_report<T: Serialize>(command: &str, body: &T, out: Option<&Path>) -> Result<(), Error> {
    let json = io::report_json(command, body)?;
    match out {
        Some(path) => {
            std::fs::write(path, json)?;
            println!("report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Sketch(args) => cmd_sketch(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Loo(args) => cmd_loo(args),
        Command::Topic(args) => cmd_topic(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Profile(args) => cmd_profile(args),
    }
}

#[derive(Serialize)]
struct SketchBody {
    n: usize,
    m: usize,
    rank: usize,
    power_iters: usize,
    seed: u64,
    spectral_error: f64,
    frobenius_error: f64,
    seconds: f64,
    cache: String,
}

fn cmd_sketch(args: SketchArgs) -> Result<ExitCode, Error> {
    let data = load_dataset(&args.input, args.seed)?;
    let t = Instant::now();
    let mut sk = power_sketch(&data.x, args.rank, args.power_iters, args.seed)?;
    let (spectral, frobenius) = sketch_error(&data.x, &sk, args.error_probes, args.seed)?;
    sk.set_spectral_error(spectral);
    let seconds = t.elapsed().as_secs_f64();
    io::save_sketch(&sk, &args.sketch_cache)?;
    let body = SketchBody {
        n: data.n(),
        m: data.m(),
        rank: sk.rank(),
        power_iters: args.power_iters,
        seed: args.seed,
        spectral_error: spectral,
        frobenius_error: frobenius,
        seconds,
        cache: args.sketch_cache.display().to_string(),
    };
    emit_report("sketch", &body, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SolveEntry {
    lambda: f64,
    objective: f64,
    gap: f64,
    iterations: usize,
    status: SolveStatus,
    support: Vec<usize>,
    kept_after_screening: Option<usize>,
    w: Vec<f64>,
}

#[derive(Serialize)]
struct SolveBody {
    n: usize,
    m: usize,
    rank: usize,
    eps: f64,
    screened: bool,
    sketch_seconds: f64,
    entries: Vec<SolveEntry>,
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Error> {
    let cfg = args.solver.config();
    let data = load_dataset(&args.input, cfg.seed)?;
    let (sk, sketch_seconds) =
        obtain_sketch(&data, args.rank, cfg.seed, args.sketch_cache.as_deref())?;
    let eps = resolve_eps(args.epsilon, &data, &sk, cfg.seed)?;
    let rp = reduction::reduce(&sk, &data.y)?;
    let mut entries = Vec::new();
    let mut all_converged = true;
    for &lam in &args.lambda {
        let (problem, kept_len) = if args.screen {
            let kept = reduction::screen(&rp, eps, lam);
            let len = kept.len();
            (rp.restrict(&kept), Some(len))
        } else {
            (rp.clone(), None)
        };
        let sol = solver::solve_reduced(&problem, eps, lam, &cfg)?;
        all_converged &= sol.status == SolveStatus::Converged;
        let w_full = reduction::scatter_solution(&sol.w, problem.kept.as_deref(), data.n());
        entries.push(SolveEntry {
            lambda: lam,
            objective: sol.objective,
            gap: sol.gap,
            iterations: sol.iterations,
            status: sol.status,
            support: solver::support_set(&w_full),
            kept_after_screening: kept_len,
            w: w_full.iter().copied().collect(),
        });
    }
    let body = SolveBody {
        n: data.n(),
        m: data.m(),
        rank: sk.rank(),
        eps,
        screened: args.screen,
        sketch_seconds,
        entries,
    };
    emit_report("solve", &body, args.out.as_deref())?;
    Ok(if all_converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn resolve_eps(
    epsilon: Option<f64>,
    data: &Dataset,
    sk: &Sketch,
    seed: u64,
) -> Result<f64, Error> {
    match epsilon {
        Some(e) => Ok(e),
        None => match sk.meta().spectral_error {
            Some(e) => Ok(e),
            None => Ok(sketch_error(&data.x, sk, 20, seed)?.0),
        },
    }
}

fn cmd_cv(args: CvArgs) -> Result<ExitCode, Error> {
    let cfg = DriverConfig {
        solver: args.solver.config(),
        threads: driver_threads(),
        seed: args.solver.seed,
        ..DriverConfig::default()
    };
    let data = load_dataset(&args.input, cfg.seed)?;
    let (sk, sketch_seconds) =
        obtain_sketch(&data, args.rank, cfg.seed, args.sketch_cache.as_deref())?;
    let report = multi::cross_validate_with_sketch(
        &data,
        sk,
        args.folds,
        &args.lambda,
        args.epsilon,
        &cfg,
        sketch_seconds,
    )?;
    for (lam, loss) in report.mean_validation_loss() {
        println!("lambda {lam:10.4e}  mean validation loss {loss:10.4e}");
    }
    emit_report("cv", &report, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct LooBody {
    m: usize,
    rank: usize,
    lambda: f64,
    objectives: Vec<f64>,
    support_sizes: Vec<usize>,
    per_instance_seconds: Vec<f64>,
    sketch_seconds: f64,
    total_seconds: f64,
    downdate_fallbacks: usize,
}

fn cmd_loo(args: LooArgs) -> Result<ExitCode, Error> {
    let cfg = DriverConfig {
        solver: args.solver.config(),
        threads: driver_threads(),
        seed: args.solver.seed,
        ..DriverConfig::default()
    };
    let data = load_dataset(&args.input, cfg.seed)?;
    let (sk, sketch_seconds) =
        obtain_sketch(&data, args.rank, cfg.seed, args.sketch_cache.as_deref())?;
    let report = multi::leave_one_out_with_sketch(
        &data,
        sk,
        args.epsilon,
        args.lambda,
        &cfg,
        sketch_seconds,
    )?;
    let body = LooBody {
        m: data.m(),
        rank: args.rank,
        lambda: args.lambda,
        objectives: report.solutions.iter().map(|s| s.objective).collect(),
        support_sizes: report.solutions.iter().map(|s| s.support.len()).collect(),
        per_instance_seconds: report.per_instance_seconds,
        sketch_seconds: report.sketch_seconds,
        total_seconds: report.total_seconds,
        downdate_fallbacks: report.downdate_fallbacks,
    };
    println!(
        "{} instances, total {:.3}s (sketch {:.3}s)",
        data.m(),
        body.total_seconds,
        body.sketch_seconds
    );
    emit_report("loo", &body, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TopicEntryBody {
    feature: usize,
    name: Option<String>,
    weight: f64,
}

#[derive(Serialize)]
struct TopicQueryBody {
    query_feature: usize,
    query_name: Option<String>,
    seconds: f64,
    entries: Vec<TopicEntryBody>,
}

#[derive(Serialize)]
struct TopicBody {
    rank: usize,
    lambda: f64,
    eps: f64,
    queries: Vec<TopicQueryBody>,
}

fn cmd_topic(args: TopicArgs) -> Result<ExitCode, Error> {
    let cfg = args.solver.config();
    let data = load_dataset(&args.input, cfg.seed)?;
    let (sk, _) = obtain_sketch(&data, args.rank, cfg.seed, args.sketch_cache.as_deref())?;
    let eps = resolve_eps(args.epsilon, &data, &sk, cfg.seed)?;
    let name_of = |i: usize| -> Option<String> {
        data.feature_names
            .as_ref()
            .and_then(|names| names.get(i).cloned())
    };

    // One shared sketch answers all queries in parallel.
    let threads = driver_threads();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let reports: Vec<Result<multi::TopicReport, Error>> = pool.install(|| {
        use rayon::prelude::*;
        args.query
            .par_iter()
            .map(|&q| multi::topic_image(&data, &sk, q, args.lambda, Some(eps), args.top, &cfg))
            .collect()
    });

    let mut queries = Vec::new();
    for report in reports {
        let report = report?;
        println!("query {}:", report.query_feature);
        for e in &report.entries {
            match name_of(e.feature) {
                Some(name) => println!("  {:>6}  {name:20} {:.4e}", e.feature, e.weight),
                None => println!("  {:>6}  {:.4e}", e.feature, e.weight),
            }
        }
        queries.push(TopicQueryBody {
            query_feature: report.query_feature,
            query_name: name_of(report.query_feature),
            seconds: report.solve_seconds,
            entries: report
                .entries
                .iter()
                .map(|e| TopicEntryBody {
                    feature: e.feature,
                    name: name_of(e.feature),
                    weight: e.weight,
                })
                .collect(),
        });
    }
    let body = TopicBody {
        rank: args.rank,
        lambda: args.lambda,
        eps,
        queries,
    };
    emit_report("topic", &body, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BenchBody {
    scaling: sqsk_core::bench::BenchReport,
    log_log_slope: Option<f64>,
    cv: Option<sqsk_core::bench::CvBenchReport>,
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Error> {
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        m_factor: args.m_factor,
        k: args.rank,
        repetitions: args.reps,
        seed: args.seed,
        tol: args.tol,
        ..BenchConfig::default()
    };
    let scaling = run_bench(&cfg)?;
    for r in &scaling.records {
        println!(
            "n={:5} m={:6}: sketched {:.4}s (sketch {:.4} + reduce {:.4} + solve {:.4}) vs full {:.4}s  ratio {:.4}",
            r.n,
            r.m,
            r.t_sketch + r.t_reduce + r.t_solve_sketched,
            r.t_sketch,
            r.t_reduce,
            r.t_solve_sketched,
            r.t_solve_full,
            r.ratio
        );
    }
    if let Some(slope) = scaling.log_log_slope() {
        println!("log-log slope of ratio vs n: {slope:.3}");
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, scaling.to_csv())?;
        println!("scaling CSV written to {}", path.display());
    }
    let cv = if args.cv {
        let report = cv_bench(&CvBenchConfig {
            n: args.cv_n,
            m: args.cv_m,
            k: args.rank,
            folds: args.cv_folds,
            grid_size: args.cv_grid,
            seed: args.seed,
            tol: args.tol,
        })?;
        println!(
            "cv: sketched {:.3}s vs full {:.3}s  speedup {:.1}x",
            report.t_sketched, report.t_full, report.speedup
        );
        Some(report)
    } else {
        None
    };
    let slope = scaling.log_log_slope();
    let body = BenchBody {
        scaling,
        log_log_slope: slope,
        cv,
    };
    emit_report("bench", &body, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ProfileBody {
    mode: ProfileMode,
    rank: usize,
    eps: f64,
    lambdas: Vec<f64>,
    cardinalities: Vec<usize>,
    objectives: Vec<f64>,
}

fn cmd_profile(args: ProfileArgs) -> Result<ExitCode, Error> {
    let cfg = args.solver.config();
    let data = load_dataset(&args.input, cfg.seed)?;
    let mode = match args.mode {
        Mode::Robust => ProfileMode::Robust,
        Mode::Nonrobust => ProfileMode::Nonrobust,
    };
    let eps = match (args.epsilon, mode) {
        (Some(e), _) => e,
        (None, ProfileMode::Nonrobust) => 0.0,
        (None, ProfileMode::Robust) => {
            let sk = power_sketch(&data.x, args.rank, 4, cfg.seed)?;
            sketch_error(&data.x, &sk, 20, cfg.seed)?.0
        }
    };
    let profile = nonrobust::sparsity_profile(mode, &data, args.rank, eps, &args.lambda, &cfg)?;
    for i in 0..profile.lambdas.len() {
        println!(
            "lambda {:10.4e}  cardinality {:4}  objective {:.6e}",
            profile.lambdas[i], profile.cardinalities[i], profile.objectives[i]
        );
    }
    if let Some(path) = &args.csv {
        let mut csv = String::from("lambda,cardinality,objective\n");
        for i in 0..profile.lambdas.len() {
            csv.push_str(&format!(
                "{},{},{}\n",
                profile.lambdas[i], profile.cardinalities[i], profile.objectives[i]
            ));
        }
        std::fs::write(path, csv)?;
        println!("profile CSV written to {}", path.display());
    }
    let body = ProfileBody {
        mode,
        rank: args.rank,
        eps,
        lambdas: profile.lambdas,
        cardinalities: profile.cardinalities,
        objectives: profile.objectives,
    };
    emit_report("profile", &body, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
