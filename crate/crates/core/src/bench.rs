//! Benchmark harness: sketched-versus-full timing curves over synthetic
//! `5n × n` problems, and the cross-validation timing comparison.

use std::time::Instant;

use serde::Serialize;

use crate::data::{synthetic, Dataset};
use crate::error::{Error, Result};
use crate::multi::{self, DriverConfig};
use crate::reduction;
use crate::sketch::{power_sketch, sketch_error};
use crate::solver::{self, SolverConfig};

/// Configuration of the scaling benchmark.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Feature counts to sweep; observations follow `m = m_factor·n`.
    pub sizes: Vec<usize>,
    pub m_factor: usize,
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub tol: f64,
    pub power_iters: usize,
    /// λ as a fraction of the largest feature-row norm.
    pub lambda_fraction: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![100, 200, 400],
            m_factor: 5,
            k: 25,
            repetitions: 5,
            seed: 0,
            tol: 1e-6,
            power_iters: 4,
            lambda_fraction: 0.1,
        }
    }
}

/// Median timings for one problem size (seconds).
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t_sketch: f64,
    pub t_reduce: f64,
    pub t_solve_sketched: f64,
    pub t_solve_full: f64,
    /// `(t_sketch + t_reduce + t_solve_sketched) / t_solve_full`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvFingerprint {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|text| {
                text.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|s| s.trim().to_string())
            });
        EnvFingerprint {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub repetitions: usize,
    pub environment: EnvFingerprint,
}

impl BenchReport {
    /// Plot-ready CSV of the scaling curve.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("n,m,k,t_sketch,t_reduce,t_solve_sketched,t_solve_full,ratio\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                r.n, r.m, r.k, r.t_sketch, r.t_reduce, r.t_solve_sketched, r.t_solve_full, r.ratio
            ));
        }
        out
    }

    /// Least-squares slope of `log ratio` against `log n`.
    pub fn log_log_slope(&self) -> Option<f64> {
        if self.records.len() < 2 {
            return None;
        }
        let points: Vec<(f64, f64)> = self
            .records
            .iter()
            .map(|r| ((r.n as f64).ln(), r.ratio.ln()))
            .collect();
        let count = points.len() as f64;
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / count;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
        let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = points
            .iter()
            .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
            .sum();
        Some(sxy / sxx)
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Time the sketched pipeline against the full solver on i.i.d. dense data,
/// one record per size, medians over the configured repetitions.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sizes.is_empty() {
        return Err(Error::invalid("run_bench needs at least one size"));
    }
    if cfg.repetitions == 0 {
        return Err(Error::invalid("run_bench needs at least one repetition"));
    }
    let solver_cfg = SolverConfig {
        tol: cfg.tol,
        ..SolverConfig::default()
    };
    let mut records = Vec::with_capacity(cfg.sizes.len());
    for (size_at, &n) in cfg.sizes.iter().enumerate() {
        let m = cfg.m_factor * n;
        let mut t_sketch = Vec::new();
        let mut t_reduce = Vec::new();
        let mut t_solve_sketched = Vec::new();
        let mut t_solve_full = Vec::new();
        for rep in 0..cfg.repetitions {
            let data = synthetic::iid_gaussian(
                n,
                m,
                cfg.seed
                    .wrapping_add(size_at as u64)
                    .wrapping_mul(1000)
                    .wrapping_add(rep as u64),
            );
            let dense = data.x.to_dense();
            let max_row_norm = (0..n).map(|i| dense.row(i).norm()).fold(0.0f64, f64::max);
            let lam = cfg.lambda_fraction * max_row_norm;

            let t0 = Instant::now();
            let sk = power_sketch(&data.x, cfg.k.min(n.min(m)), cfg.power_iters, cfg.seed)?;
            let (eps, _) = sketch_error(&data.x, &sk, 20, cfg.seed)?;
            t_sketch.push(t0.elapsed().as_secs_f64());

            let t1 = Instant::now();
            let rp = reduction::reduce(&sk, &data.y)?;
            t_reduce.push(t1.elapsed().as_secs_f64());

            let t2 = Instant::now();
            let sketched = solver::solve_reduced(&rp, eps, lam, &solver_cfg)?;
            t_solve_sketched.push(t2.elapsed().as_secs_f64());

            let t3 = Instant::now();
            let full = solver::solve_full(&dense, &data.y, lam, &solver_cfg)?;
            t_solve_full.push(t3.elapsed().as_secs_f64());
            let _ = (sketched.objective, full.objective);
        }
        let sketch_med = median(t_sketch);
        let reduce_med = median(t_reduce);
        let solve_med = median(t_solve_sketched);
        let full_med = median(t_solve_full);
        records.push(BenchRecord {
            n,
            m,
            k: cfg.k.min(n.min(m)),
            t_sketch: sketch_med,
            t_reduce: reduce_med,
            t_solve_sketched: solve_med,
            t_solve_full: full_med,
            ratio: (sketch_med + reduce_med + solve_med) / full_med,
        });
    }
    Ok(BenchReport {
        records,
        repetitions: cfg.repetitions,
        environment: EnvFingerprint::current(),
    })
}

/// Cross-validation timing comparison on one synthetic instance.
#[derive(Debug, Clone)]
pub struct CvBenchConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub folds: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CvBenchConfig {
    fn default() -> Self {
        CvBenchConfig {
            n: 400,
            m: 2000,
            k: 25,
            folds: 5,
            grid_size: 10,
            seed: 0,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvBenchReport {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub folds: usize,
    pub lambdas: Vec<f64>,
    /// Sketched total including the sketch phase.
    pub t_sketched: f64,
    pub t_full: f64,
    pub speedup: f64,
    /// Mean validation losses per λ, sketched and full, for parity checks.
    pub sketched_validation: Vec<f64>,
    pub full_validation: Vec<f64>,
}

/// Log-spaced λ grid between the given fractions of the largest row norm.
pub fn lambda_grid(data: &Dataset, grid_size: usize, lo_frac: f64, hi_frac: f64) -> Vec<f64> {
    let dense = data.x.to_dense();
    let max_row_norm = (0..data.n())
        .map(|i| dense.row(i).norm())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    (0..grid_size)
        .map(|i| {
            let t = if grid_size == 1 {
                0.0
            } else {
                i as f64 / (grid_size - 1) as f64
            };
            max_row_norm * lo_frac * (hi_frac / lo_frac).powf(t)
        })
        .collect()
}

/// Run sketched and full 5-fold-style cross-validation on the same data and
/// report wall-clock totals. Both sides run single-threaded.
pub fn cv_bench(cfg: &CvBenchConfig) -> Result<CvBenchReport> {
    let data = synthetic::iid_gaussian(cfg.n, cfg.m, cfg.seed);
    let lambdas = lambda_grid(&data, cfg.grid_size, 0.01, 0.5);
    let driver = DriverConfig {
        solver: SolverConfig {
            tol: cfg.tol,
            ..SolverConfig::default()
        },
        threads: 1,
        seed: cfg.seed,
        ..DriverConfig::default()
    };
    let sketched = multi::cross_validate(&data, cfg.k, cfg.folds, &lambdas, None, &driver)?;
    let full = multi::cross_validate_full(&data, cfg.folds, &lambdas, &driver)?;
    Ok(CvBenchReport {
        n: cfg.n,
        m: cfg.m,
        k: cfg.k,
        folds: cfg.folds,
        lambdas,
        t_sketched: sketched.total_seconds,
        t_full: full.total_seconds,
        speedup: full.total_seconds / sketched.total_seconds,
        sketched_validation: sketched
            .mean_validation_loss()
            .into_iter()
            .map(|(_, l)| l)
            .collect(),
        full_validation: full
            .mean_validation_loss()
            .into_iter()
            .map(|(_, l)| l)
            .collect(),
    })
}
