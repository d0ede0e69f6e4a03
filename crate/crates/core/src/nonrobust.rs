//! The non-robust sketched model `min ‖QPᵀw − y‖₂ + λ‖w‖₁`, the constructive
//! cardinality-reduction procedure behind its "at most k nonzeros" guarantee,
//! and the sparsity-control profile comparing it against the robust model.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels;
use crate::reduction::{self, ReducedProblem};
use crate::sketch::{power_sketch, Sketch};
use crate::solver::{self, Solution, SolverConfig};
use crate::{Mat, Vec64};

/// Relative zero threshold in the ρ selection.
const ZERO_TOL: f64 = 1e-12;

/// Solve the non-robust square-root LASSO on a sketch: exactly the reduced
/// robust problem with `ε = 0` on the same `(R, c, s)` data.
pub fn solve_nonrobust(sk: &Sketch, y: &Vec64, lam: f64, cfg: &SolverConfig) -> Result<Solution> {
    let rp = reduction::reduce(sk, y)?;
    solver::solve_reduced(&rp, 0.0, lam, cfg)
}

/// One step of the cardinality reduction.
#[derive(Debug, Clone)]
pub struct ReductionStep {
    /// Feature whose coordinate the step drives toward zero.
    pub pivot: usize,
    /// Null-space direction θ (full n coordinates).
    pub direction: Vec64,
    /// Step length ρ ≥ 0.
    pub step: f64,
}

/// Trace of the reduction: every step keeps `Ax = b` and, for ℓ₁-optimal
/// inputs, `‖x‖₁` unchanged, while zeroing at least one component.
#[derive(Debug, Clone)]
pub struct CardinalityTrace {
    pub steps: Vec<ReductionStep>,
    pub x: Vec64,
}

impl CardinalityTrace {
    /// Nonzero count of the final vector at the ρ-selection threshold.
    pub fn cardinality(&self) -> usize {
        let cut = ZERO_TOL * self.x.amax();
        self.x.iter().filter(|v| v.abs() > cut).count()
    }
}

/// Reduce the cardinality of a solution of `min ‖x‖₁ s.t. Ax = b` to at most
/// `k` (= rows of `A`) by walking along null-space directions until one
/// coordinate at a time hits zero.
///
/// `Ax = b` must hold to `tol` on entry. Feasibility is preserved exactly by
/// construction; the ℓ₁ norm is preserved whenever the input is ℓ₁-optimal
/// (and whenever the active null space leaves room to steer, which covers
/// every step except the last one on non-optimal inputs).
pub fn cardinality_reduce(
    a: &Mat,
    b: &Vec64,
    x: &Vec64,
    tol: f64,
) -> Result<CardinalityTrace> {
    let (k, n) = (a.nrows(), a.ncols());
    if x.len() != n || b.len() != k {
        return Err(Error::dims("cardinality_reduce shapes"));
    }
    let feas = (a * x - b).norm();
    if feas > tol.max(kernels::ABS_FLOOR) * (1.0 + b.norm()) {
        return Err(Error::invalid(format!(
            "cardinality_reduce: Ax − b residual {feas:.3e} exceeds tolerance"
        )));
    }

    let mut x = x.clone();
    let mut steps = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6361_7264);

    loop {
        let cut = ZERO_TOL * x.amax();
        let active: Vec<usize> = (0..n).filter(|&i| x[i].abs() > cut).collect();
        if active.len() <= k {
            break;
        }
        if steps.len() > n {
            return Err(Error::invalid(
                "cardinality_reduce failed to terminate (numerical rank ambiguity)",
            ));
        }

        // Signs on the active set and the columns they multiply.
        let signs = Vec64::from_iterator(active.len(), active.iter().map(|&i| x[i].signum()));
        let mut a_act = Mat::zeros(k, active.len());
        for (col, &i) in active.iter().enumerate() {
            a_act.set_column(col, &a.column(i));
        }

        let coeffs = null_space_direction(&a_act, &signs, &mut rng)?;

        // Pivot: the largest coefficient in the dependence.
        let pivot_col = coeffs.iamax();
        let pivot = active[pivot_col];
        // θ = (−s_i/ĉ_i)·ĉ gives θ_pivot = −sign(x_pivot).
        let mut theta_act = &coeffs * (-signs[pivot_col] / coeffs[pivot_col]);
        // For exactly optimal inputs sᵀθ = 0 and the ℓ₁ norm is constant
        // along the step. A not-quite-optimal input can leave a residual
        // slope; walking the non-increasing direction still hits a zero
        // (the ℓ₁ norm cannot fall forever) and never inflates the norm.
        let slope = signs.dot(&theta_act);
        if slope > 0.0 {
            theta_act = -theta_act;
        }

        // ρ = min{t ≥ 0 : some active coordinate reaches zero}.
        let mut rho = f64::INFINITY;
        for (col, &i) in active.iter().enumerate() {
            let t = theta_act[col];
            if x[i] * t < 0.0 {
                rho = rho.min(-x[i] / t);
            }
        }
        if !rho.is_finite() {
            return Err(Error::invalid(
                "cardinality_reduce: no coordinate hit found (numerical rank ambiguity)",
            ));
        }

        let mut direction = Vec64::zeros(n);
        for (col, &i) in active.iter().enumerate() {
            direction[i] = theta_act[col];
        }
        for (col, &i) in active.iter().enumerate() {
            x[i] += rho * theta_act[col];
            // Snap the hit coordinates exactly to zero.
            if x[i].abs() <= 1e-12 * (1.0 + rho * theta_act[col].abs()) {
                x[i] = 0.0;
            }
        }
        steps.push(ReductionStep {
            pivot,
            direction,
            step: rho,
        });
    }
    Ok(CardinalityTrace { steps, x })
}

/// A null-space vector of `a_act`, chosen orthogonal to the sign vector
/// whenever the null space allows it (that choice keeps the ℓ₁ norm exactly
/// constant along the step).
fn null_space_direction(
    a_act: &Mat,
    signs: &Vec64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec64> {
    let width = a_act.ncols();
    // Projector onto null(a_act) through the pseudo-inverse of the k×k Gram.
    let gram = a_act * a_act.transpose();
    let (values, vectors) = kernels::sym_eig(&gram)?;
    let lam_max = values[0].max(0.0);
    let cut = (1e-12 * lam_max).max(kernels::ABS_FLOOR);
    let inv = Vec64::from_iterator(
        values.len(),
        values.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }),
    );
    let project_null = |v: &Vec64| -> Vec64 {
        let av = a_act * v;
        let mut z = vectors.tr_mul(&av);
        for i in 0..z.len() {
            z[i] *= inv[i];
        }
        v - a_act.tr_mul(&(&vectors * z))
    };

    let sign_null = project_null(signs);
    let sign_norm = sign_null.norm();
    let tiny = 1e-10 * (width as f64).sqrt();

    for attempt in 0..8 {
        let z = Vec64::from_fn(width, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut cand = project_null(&z);
        if sign_norm > tiny {
            // Remove the sign component so that sᵀθ = 0 exactly.
            let coeff = sign_null.dot(&cand) / (sign_norm * sign_norm);
            cand.axpy(-coeff, &sign_null, 1.0);
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            return Ok(cand / norm);
        }
        // The null space may be one-dimensional and aligned with the sign
        // vector; fall back to it (the input was not ℓ₁-optimal then).
        if attempt == 3 && sign_norm > tiny {
            return Ok(&sign_null / sign_norm);
        }
    }
    Err(Error::invalid(
        "no null-space dependence found though cardinality exceeds k",
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    Robust,
    Nonrobust,
}

/// Per-λ cardinalities and weights of one model across a grid.
#[derive(Debug, Clone)]
pub struct SparsityProfile {
    pub mode: ProfileMode,
    pub lambdas: Vec<f64>,
    pub cardinalities: Vec<usize>,
    pub objectives: Vec<f64>,
    pub weights: Vec<Vec64>,
}

/// Run the robust or non-robust model across a λ grid on a fresh rank-`k`
/// sketch of the data; non-robust cardinalities are reported after
/// [`cardinality_reduce`].
pub fn sparsity_profile(
    mode: ProfileMode,
    data: &Dataset,
    k: usize,
    eps: f64,
    lambda_grid: &[f64],
    cfg: &SolverConfig,
) -> Result<SparsityProfile> {
    if lambda_grid.is_empty() {
        return Err(Error::invalid("sparsity_profile needs a nonempty λ grid"));
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("λ grid must be strictly increasing"));
    }
    let sk = power_sketch(&data.x, k, 4, cfg.seed)?;
    let rp = reduction::reduce(&sk, &data.y)?;
    let mut out = SparsityProfile {
        mode,
        lambdas: lambda_grid.to_vec(),
        cardinalities: Vec::with_capacity(lambda_grid.len()),
        objectives: Vec::with_capacity(lambda_grid.len()),
        weights: Vec::with_capacity(lambda_grid.len()),
    };
    for &lam in lambda_grid {
        match mode {
            ProfileMode::Robust => {
                let sol = solver::solve_reduced(&rp, eps, lam, cfg)?;
                out.cardinalities.push(sol.support.len());
                out.objectives.push(sol.objective);
                out.weights.push(sol.w);
            }
            ProfileMode::Nonrobust => {
                let sol = solver::solve_reduced(&rp, 0.0, lam, cfg)?;
                let trace = reduce_solution_cardinality(&rp, &sol.w)?;
                out.cardinalities.push(solver::support_set(&trace.x).len());
                out.objectives.push(rp.objective(&trace.x, 0.0, lam));
                out.weights.push(trace.x);
            }
        }
    }
    Ok(out)
}

/// Build the basis-pursuit pair `(A, b)` that certifies a non-robust solve
/// and run the reduction on its solution.
///
/// Interior-point iterates are never exactly sparse; coordinates below
/// `1e-8·‖w‖_∞` are solver noise with meaningless signs and are dropped
/// before the walk, which keeps the conservation laws at the 1e-9 level.
pub fn reduce_solution_cardinality(rp: &ReducedProblem, w: &Vec64) -> Result<CardinalityTrace> {
    let cut = 1e-8 * w.amax();
    let cleaned = w.map(|v| if v.abs() <= cut { 0.0 } else { v });
    let stacked = rp.r.transpose();
    let image = &stacked * &cleaned;
    cardinality_reduce(&stacked, &image, &cleaned, 1e-6)
}
