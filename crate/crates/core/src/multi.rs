//! Drivers that amortize one sketch across many solves: k-fold
//! cross-validation, leave-one-out, and topic imaging. All per-instance work
//! happens on the reduced problem, so the per-solve cost is independent of
//! the number of observations once the sketch exists.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::reduction::{self, ReducedProblem};
use crate::sketch::{power_sketch, sketch_error, Side, Sketch};
use crate::solver::{self, Solution, SolverConfig};
use crate::{Mat, Vec64};

/// Configuration shared by the multi-instance drivers.
#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub solver: SolverConfig,
    /// Power-iteration passes for the one-time sketch.
    pub power_iters: usize,
    /// Worker threads for independent instances; 0 uses all available.
    pub threads: usize,
    /// Seed for the sketch and the fold shuffle.
    pub seed: u64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            solver: SolverConfig::default(),
            power_iters: 4,
            threads: 0,
            seed: 0,
        }
    }
}

fn run_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// One (fold, λ) cell of a cross-validation run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CvRecord {
    pub fold: usize,
    pub lambda: f64,
    pub objective: f64,
    /// `‖X_valᵀ w − y_val‖₂` on the original (unsketched) held-out data.
    pub validation_loss: f64,
    /// F1 of `sign(X_valᵀ w)` when the labels are ±1.
    pub f1: Option<f64>,
    pub cardinality: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CvReport {
    pub folds: usize,
    pub rank: usize,
    pub eps: f64,
    pub lambdas: Vec<f64>,
    pub records: Vec<CvRecord>,
    /// Fold id of every observation (a disjoint, exhaustive partition).
    pub fold_assignment: Vec<usize>,
    pub sketch_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

impl CvReport {
    /// Mean validation loss per λ across folds.
    pub fn mean_validation_loss(&self) -> Vec<(f64, f64)> {
        self.lambdas
            .iter()
            .map(|&lam| {
                let losses: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.lambda == lam)
                    .map(|r| r.validation_loss)
                    .collect();
                (lam, losses.iter().sum::<f64>() / losses.len().max(1) as f64)
            })
            .collect()
    }
}

/// F1 score of ±1 predictions with ties counted as +1.
pub fn f1_score(truth: &[f64], scores: &[f64]) -> f64 {
    let (mut tp, mut fp_, mut fn_) = (0usize, 0usize, 0usize);
    for (&t, &s) in truth.iter().zip(scores) {
        let pred = if s >= 0.0 { 1.0 } else { -1.0 };
        match (t > 0.0, pred > 0.0) {
            (true, true) => tp += 1,
            (false, true) => fp_ += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp_ + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp_ + fn_) as f64
    }
}

/// Shuffled round-robin partition into `folds` parts.
fn assign_folds(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf01d);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; m];
    for (pos, &obs) in order.iter().enumerate() {
        assignment[obs] = pos % folds;
    }
    assignment
}

/// K-fold cross-validation on one shared sketch.
///
/// The data is sketched once; each fold drops its observation rows from `Q`
/// (re-reducing recomputes `K` from the surviving rows in `O(m k²)`), solves
/// every λ on the reduced problem, and evaluates on the original held-out
/// columns. The reported total includes the sketch phase. `eps = None` uses
/// the measured spectral error of the sketch.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    folds: usize,
    lambdas: &[f64],
    eps: Option<f64>,
    cfg: &DriverConfig,
) -> Result<CvReport> {
    let t_sketch = Instant::now();
    let sk = power_sketch(&data.x, k, cfg.power_iters, cfg.seed)?;
    let sketch_seconds = t_sketch.elapsed().as_secs_f64();
    cross_validate_with_sketch(data, sk, folds, lambdas, eps, cfg, sketch_seconds)
}

/// [`cross_validate`] on a sketch obtained elsewhere (e.g. a cache file);
/// `sketch_seconds` is whatever acquiring it cost and is included in the
/// reported totals.
pub fn cross_validate_with_sketch(
    data: &Dataset,
    mut sk: Sketch,
    folds: usize,
    lambdas: &[f64],
    eps: Option<f64>,
    cfg: &DriverConfig,
    sketch_seconds: f64,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::invalid("cross_validate needs at least 2 folds"));
    }
    let m = data.m();
    if m < folds {
        return Err(Error::invalid("more folds than observations"));
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("empty λ grid"));
    }
    let t_total = Instant::now();
    let k = sk.rank();
    let eps = match eps {
        Some(e) => e,
        None => match sk.meta().spectral_error {
            Some(e) => e,
            None => {
                let (spectral, _) = sketch_error(&data.x, &sk, 20, cfg.seed)?;
                sk.set_spectral_error(spectral);
                spectral
            }
        },
    };

    let assignment = assign_folds(m, folds, cfg.seed);
    for f in 0..folds {
        if !assignment.contains(&f) {
            return Err(Error::invalid(format!("fold {f} has zero observations")));
        }
    }

    let fold_jobs: Vec<usize> = (0..folds).collect();
    let sk_ref = &sk;
    let data_ref = data;
    let assignment_ref = &assignment;
    let per_fold: Vec<Result<Vec<CvRecord>>> = run_pool(cfg.threads, move || {
        use rayon::prelude::*;
        fold_jobs
            .par_iter()
            .map(|&fold| {
                cv_one_fold(
                    data_ref,
                    sk_ref,
                    assignment_ref,
                    fold,
                    lambdas,
                    eps,
                    &cfg.solver,
                )
            })
            .collect()
    })?;

    let mut records = Vec::new();
    for fold_records in per_fold {
        records.extend(fold_records?);
    }
    let solve_seconds = records.iter().map(|r| r.solve_seconds).sum();
    Ok(CvReport {
        folds,
        rank: k,
        eps,
        lambdas: lambdas.to_vec(),
        records,
        fold_assignment: assignment,
        sketch_seconds,
        solve_seconds,
        total_seconds: sketch_seconds + t_total.elapsed().as_secs_f64(),
    })
}

fn cv_one_fold(
    data: &Dataset,
    sk: &Sketch,
    assignment: &[usize],
    fold: usize,
    lambdas: &[f64],
    eps: f64,
    solver_cfg: &SolverConfig,
) -> Result<Vec<CvRecord>> {
    let m = data.m();
    let held_out: Vec<usize> = (0..m).filter(|&i| assignment[i] == fold).collect();
    let view = sk.drop_rows(&held_out, Side::Observations)?;
    let y_train = Vec64::from_iterator(
        view.m(),
        (0..view.m()).map(|i| data.y[view.observation_id(i)]),
    );
    let rp = reduction::reduce(&view, &y_train)?;

    let y_val: Vec<f64> = held_out.iter().map(|&i| data.y[i]).collect();
    let binary = data.has_binary_labels();

    let mut out = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let t = Instant::now();
        let sol = solver::solve_reduced(&rp, eps, lam, solver_cfg)?;
        let solve_seconds = t.elapsed().as_secs_f64();
        let preds_all = data.x.predictions(&sol.w)?;
        let preds: Vec<f64> = held_out.iter().map(|&i| preds_all[i]).collect();
        let validation_loss = preds
            .iter()
            .zip(&y_val)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            .sqrt();
        let f1 = binary.then(|| f1_score(&y_val, &preds));
        out.push(CvRecord {
            fold,
            lambda: lam,
            objective: sol.objective,
            validation_loss,
            f1,
            cardinality: sol.support.len(),
            solve_seconds,
        });
    }
    Ok(out)
}

/// Full-model cross-validation baseline: one [`solver::solve_full`] per
/// (fold, λ) on the original data. Used for timing and parity comparisons.
pub fn cross_validate_full(
    data: &Dataset,
    folds: usize,
    lambdas: &[f64],
    cfg: &DriverConfig,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::invalid("cross_validate_full needs at least 2 folds"));
    }
    let m = data.m();
    if m < folds {
        return Err(Error::invalid("more folds than observations"));
    }
    let t_total = Instant::now();
    let assignment = assign_folds(m, folds, cfg.seed);
    let dense = data.x.to_dense();
    let binary = data.has_binary_labels();

    let fold_jobs: Vec<usize> = (0..folds).collect();
    let per_fold: Vec<Result<Vec<CvRecord>>> = run_pool(cfg.threads, || {
        use rayon::prelude::*;
        fold_jobs
            .par_iter()
            .map(|&fold| {
                let train: Vec<usize> = (0..m).filter(|&i| assignment[i] != fold).collect();
                let held_out: Vec<usize> = (0..m).filter(|&i| assignment[i] == fold).collect();
                let mut x_train = Mat::zeros(data.n(), train.len());
                for (dst, &src) in train.iter().enumerate() {
                    x_train.set_column(dst, &dense.column(src));
                }
                let y_train = Vec64::from_iterator(train.len(), train.iter().map(|&i| data.y[i]));
                let y_val: Vec<f64> = held_out.iter().map(|&i| data.y[i]).collect();
                let mut out = Vec::with_capacity(lambdas.len());
                for &lam in lambdas {
                    let t = Instant::now();
                    let sol = solver::solve_full(&x_train, &y_train, lam, &cfg.solver)?;
                    let solve_seconds = t.elapsed().as_secs_f64();
                    let preds: Vec<f64> = held_out
                        .iter()
                        .map(|&i| dense.column(i).dot(&sol.w))
                        .collect();
                    let validation_loss = preds
                        .iter()
                        .zip(&y_val)
                        .map(|(p, y)| (p - y) * (p - y))
                        .sum::<f64>()
                        .sqrt();
                    let f1 = binary.then(|| f1_score(&y_val, &preds));
                    out.push(CvRecord {
                        fold,
                        lambda: lam,
                        objective: sol.objective,
                        validation_loss,
                        f1,
                        cardinality: sol.support.len(),
                        solve_seconds,
                    });
                }
                Ok(out)
            })
            .collect()
    })?;

    let mut records = Vec::new();
    for fold_records in per_fold {
        records.extend(fold_records?);
    }
    let solve_seconds = records.iter().map(|r| r.solve_seconds).sum();
    Ok(CvReport {
        folds,
        rank: 0,
        eps: 0.0,
        lambdas: lambdas.to_vec(),
        records,
        fold_assignment: assignment,
        sketch_seconds: 0.0,
        solve_seconds,
        total_seconds: t_total.elapsed().as_secs_f64(),
    })
}

/// Leave-one-out report.
#[derive(Debug, Clone)]
pub struct LooReport {
    pub solutions: Vec<Solution>,
    pub per_instance_seconds: Vec<f64>,
    pub sketch_seconds: f64,
    pub total_seconds: f64,
    /// Instances where the rank-one downdate was numerically indefinite and
    /// the reduction was recomputed from scratch.
    pub downdate_fallbacks: usize,
}

/// The downdated reduction for leaving out observation `i`:
/// `K_i = K − qᵢqᵢᵀ`, `(Qᵀy)_i = Qᵀy − qᵢ yᵢ`, `s` and `R` rebuilt from them.
pub(crate) fn downdated_problem(
    sk: &Sketch,
    gram: &Mat,
    qty: &Vec64,
    yty: f64,
    i: usize,
    y_i: f64,
) -> Result<ReducedProblem> {
    let q_i = sk.q_row(i);
    let gram_i = gram - &q_i * q_i.transpose();
    let qty_i = qty - &q_i * y_i;
    let yty_i = yty - y_i * y_i;
    let (half, inv_half, rank) = reduction::psd_roots_with_rank(&gram_i, 1e-12)?;
    let c = &inv_half * qty_i;
    let gap = yty_i - c.norm_squared();
    if gap < -1e-8 * yty_i.abs().max(1.0) {
        return Err(Error::Indefinite { min_eig: gap });
    }
    let r = sk.p_mul(&half)?;
    Ok(ReducedProblem {
        n_features: r.nrows(),
        r,
        c,
        s: gap.max(0.0).sqrt(),
        kept: None,
        rank_deficient: rank < gram.nrows(),
    })
}

/// Leave-one-out analysis: one reduced solve per left-out observation, each
/// derived from the shared sketch by an `O(k²)` Gram downdate.
pub fn leave_one_out(
    data: &Dataset,
    k: usize,
    eps: Option<f64>,
    lam: f64,
    cfg: &DriverConfig,
) -> Result<LooReport> {
    let t_sketch = Instant::now();
    let sk = power_sketch(&data.x, k, cfg.power_iters, cfg.seed)?;
    let sketch_seconds = t_sketch.elapsed().as_secs_f64();
    leave_one_out_with_sketch(data, sk, eps, lam, cfg, sketch_seconds)
}

/// [`leave_one_out`] on a sketch obtained elsewhere.
pub fn leave_one_out_with_sketch(
    data: &Dataset,
    mut sk: Sketch,
    eps: Option<f64>,
    lam: f64,
    cfg: &DriverConfig,
    sketch_seconds: f64,
) -> Result<LooReport> {
    let m = data.m();
    if m < 2 {
        return Err(Error::invalid("leave_one_out needs at least 2 observations"));
    }
    let t_total = Instant::now();
    let eps = match eps {
        Some(e) => e,
        None => match sk.meta().spectral_error {
            Some(e) => e,
            None => {
                let (spectral, _) = sketch_error(&data.x, &sk, 20, cfg.seed)?;
                sk.set_spectral_error(spectral);
                spectral
            }
        },
    };

    let gram = sk.q_gram();
    let qty = sk.q_tr_mul(&data.y)?;
    let yty = data.y.norm_squared();

    let sk_ref = &sk;
    let gram_ref = &gram;
    let qty_ref = &qty;
    let y_ref = &data.y;
    let solver_cfg = &cfg.solver;
    let results: Vec<Result<(Solution, f64, bool)>> = run_pool(cfg.threads, move || {
        use rayon::prelude::*;
        (0..m)
            .into_par_iter()
            .map(|i| {
                let t = Instant::now();
                let (rp, fell_back) =
                    match downdated_problem(sk_ref, gram_ref, qty_ref, yty, i, y_ref[i]) {
                        Ok(rp) => (rp, false),
                        Err(_) => {
                            // Indefinite downdate: recompute from the view.
                            let view = sk_ref.drop_rows(&[i], Side::Observations)?;
                            let y_rest = Vec64::from_iterator(
                                view.m(),
                                (0..view.m()).map(|j| y_ref[view.observation_id(j)]),
                            );
                            (reduction::reduce(&view, &y_rest)?, true)
                        }
                    };
                let sol = solver::solve_reduced(&rp, eps, lam, solver_cfg)?;
                Ok((sol, t.elapsed().as_secs_f64(), fell_back))
            })
            .collect()
    })?;

    let mut solutions = Vec::with_capacity(m);
    let mut per_instance_seconds = Vec::with_capacity(m);
    let mut downdate_fallbacks = 0usize;
    for r in results {
        let (sol, secs, fell_back) = r?;
        solutions.push(sol);
        per_instance_seconds.push(secs);
        downdate_fallbacks += usize::from(fell_back);
    }
    Ok(LooReport {
        solutions,
        per_instance_seconds,
        sketch_seconds,
        total_seconds: sketch_seconds + t_total.elapsed().as_secs_f64(),
        downdate_fallbacks,
    })
}

/// One entry of a topic report: original feature id and `|w|`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TopicEntry {
    pub feature: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TopicReport {
    pub query_feature: usize,
    pub entries: Vec<TopicEntry>,
    pub solve_seconds: f64,
}

/// Topic imaging: regress feature `j` on all the others over the shared
/// sketch (row `j` of `X` becomes the target; row `j` of `P` is dropped) and
/// rank the remaining features by `|w|`.
pub fn topic_image(
    data: &Dataset,
    sk: &Sketch,
    query_feature: usize,
    lam: f64,
    eps: Option<f64>,
    top_t: usize,
    cfg: &SolverConfig,
) -> Result<TopicReport> {
    if query_feature >= sk.n() {
        return Err(Error::invalid(format!(
            "query feature {query_feature} out of range"
        )));
    }
    if top_t == 0 {
        return Err(Error::invalid("top_t must be at least 1"));
    }
    let eps = match eps {
        Some(e) => e,
        None => sk.meta().spectral_error.ok_or_else(|| {
            Error::invalid("no eps given and the sketch has no measured spectral error")
        })?,
    };
    let t = Instant::now();
    let target = data.x.feature_row(query_feature);
    if target.norm() == 0.0 {
        return Err(Error::invalid(
            "query feature is absent from the corpus (zero row)",
        ));
    }
    let design = sk.drop_rows(&[query_feature], Side::Features)?;
    let rp = reduction::reduce(&design, &target)?;
    let sol = solver::solve_reduced(&rp, eps, lam, cfg)?;
    let mut ranked: Vec<TopicEntry> = (0..sol.w.len())
        .map(|i| TopicEntry {
            feature: design.feature_id(i),
            weight: sol.w[i].abs(),
        })
        .collect();
    ranked.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.feature.cmp(&b.feature)));
    ranked.truncate(top_t);
    Ok(TopicReport {
        query_feature,
        entries: ranked,
        solve_seconds: t.elapsed().as_secs_f64(),
    })
}
