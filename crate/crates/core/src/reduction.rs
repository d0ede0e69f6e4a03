//! Reduction of a sketch plus response to the small robust problem
//!
//! ```text
//!   min_w ‖(c − Rᵀw, s)‖₂ + ε‖w‖₂ + λ‖w‖₁
//! ```
//!
//! together with safe feature elimination, the worst-case data perturbation
//! witness, and dual-certificate tooling.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels;
use crate::sketch::Sketch;
use crate::{Mat, Vec64};

/// Default relative eigenvalue cutoff when inverting `K = QᵀQ`.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Data `(R, c, s)` of the reduced robust problem.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    /// `R = P K^{1/2}`, one row per surviving feature.
    pub r: Mat,
    /// `c = K^{-1/2} Qᵀ y`.
    pub c: Vec64,
    /// `s = √(yᵀy − cᵀc) ≥ 0`.
    pub s: f64,
    /// Number of features (rows of `r`).
    pub n_features: usize,
    /// Original feature ids when this problem was restricted by screening.
    pub kept: Option<Vec<usize>>,
    /// Set when `K` was rank-deficient and the pseudo-inverse path was taken.
    pub rank_deficient: bool,
}

impl ReducedProblem {
    pub fn rank(&self) -> usize {
        self.r.ncols()
    }

    /// Objective of the reduced problem at `w`.
    pub fn objective(&self, w: &Vec64, eps: f64, lam: f64) -> f64 {
        let fit = &self.c - self.r.tr_mul(w);
        (fit.norm_squared() + self.s * self.s).sqrt() + eps * w.norm() + lam * w.lp_norm(1)
    }

    /// Euclidean norm of each feature row of `R`; these are the column norms
    /// of the stacked design `A = [Rᵀ; 0]` used by safe feature elimination.
    pub fn row_norms(&self) -> Vec64 {
        Vec64::from_iterator(
            self.n_features,
            (0..self.n_features).map(|i| self.r.row(i).norm()),
        )
    }

    /// Keep only the listed features (indices into this problem's rows).
    pub fn restrict(&self, keep: &[usize]) -> ReducedProblem {
        let mut r = Mat::zeros(keep.len(), self.rank());
        for (dst, &src) in keep.iter().enumerate() {
            r.row_mut(dst).copy_from(&self.r.row(src));
        }
        let kept = match &self.kept {
            None => keep.to_vec(),
            Some(prev) => keep.iter().map(|&i| prev[i]).collect(),
        };
        ReducedProblem {
            r,
            c: self.c.clone(),
            s: self.s,
            n_features: keep.len(),
            kept: Some(kept),
            rank_deficient: self.rank_deficient,
        }
    }
}

/// Scatter a solution on a restricted feature set back to `n_full`
/// coordinates, zero-padding the screened-out features.
pub fn scatter_solution(w: &Vec64, kept: Option<&[usize]>, n_full: usize) -> Vec64 {
    match kept {
        None => w.clone(),
        Some(ids) => {
            let mut out = Vec64::zeros(n_full);
            for (i, &id) in ids.iter().enumerate() {
                out[id] = w[i];
            }
            out
        }
    }
}

/// Build the reduced problem from a sketch and a response.
///
/// `K = QᵀQ`, `c = K^{-1/2} Qᵀ y`, `s = √(yᵀy − cᵀc)`, `R = P K^{1/2}`.
/// When `Q` has orthonormal columns this degenerates to `c = Qᵀy`, `R = P`.
/// A rank-deficient `K` (possible after row deletions) takes the
/// pseudo-inverse path and sets the `rank_deficient` flag.
pub fn reduce(sk: &Sketch, y: &Vec64) -> Result<ReducedProblem> {
    if y.len() != sk.m() {
        return Err(Error::dims(format!(
            "reduce: response has {} entries for {} observations",
            y.len(),
            sk.m()
        )));
    }
    let yty = y.norm_squared();
    if yty == 0.0 {
        return Err(Error::invalid("reduce: response y must be nonzero"));
    }
    let gram = sk.q_gram();
    let qty = sk.q_tr_mul(y)?;
    let (half, inv_half, rank) = psd_roots_with_rank(&gram, DEFAULT_RANK_TOL)?;
    let c = &inv_half * &qty;
    let ctc = c.norm_squared();
    let gap = yty - ctc;
    if gap < -1e-8 * yty {
        return Err(Error::invalid(format!(
            "reduce: energy split violated (yᵀy − cᵀc = {gap:.3e} < 0)"
        )));
    }
    let s = gap.max(0.0).sqrt();
    let r = sk.p_mul(&half)?;
    Ok(ReducedProblem {
        n_features: r.nrows(),
        r,
        c,
        s,
        kept: None,
        rank_deficient: rank < gram.nrows(),
    })
}

/// PSD square root / inverse square root plus the numerical rank.
pub(crate) fn psd_roots_with_rank(k: &Mat, rank_tol: f64) -> Result<(Mat, Mat, usize)> {
    let (values, vectors) = kernels::sym_eig(k)?;
    let n = values.len();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0), 0));
    }
    let lambda_max = values[0].max(0.0);
    let cut = (rank_tol * lambda_max).max(kernels::ABS_FLOOR);
    if values[n - 1] < -cut {
        return Err(Error::Indefinite {
            min_eig: values[n - 1],
        });
    }
    let mut rank = 0usize;
    let mut half = DVector::zeros(n);
    let mut inv_half = DVector::zeros(n);
    for i in 0..n {
        if values[i] > cut {
            rank += 1;
            let root = values[i].sqrt();
            half[i] = root;
            inv_half[i] = 1.0 / root;
        }
    }
    let scale = |d: &DVector<f64>| {
        let mut m = vectors.clone();
        for j in 0..n {
            let mut col = m.column_mut(j);
            col *= d[j];
        }
        m * vectors.transpose()
    };
    Ok((scale(&half), scale(&inv_half), rank))
}

/// Safe feature elimination: keep feature `i` iff `‖row_i(R)‖₂ > λ − ε`.
///
/// Features on the boundary are discarded (the elimination condition is
/// non-strict). With `λ ≤ ε` every feature is kept. Solving the screened
/// problem and zero-padding gives the same optimal value as the original.
pub fn screen(rp: &ReducedProblem, eps: f64, lam: f64) -> Vec<usize> {
    let threshold = lam - eps;
    let norms = rp.row_norms();
    (0..rp.n_features)
        .filter(|&i| norms[i] > threshold)
        .collect()
}

/// Rank-one worst-case data perturbation `Δ = ε · v uᵀ`.
#[derive(Debug, Clone)]
pub struct PerturbationWitness {
    /// Perturbation magnitude (spectral and Frobenius norm of `Δ`).
    pub scale: f64,
    /// Unit feature-side factor (`n` entries).
    pub feature_factor: Vec64,
    /// Unit observation-side factor (`m` entries).
    pub observation_factor: Vec64,
    /// `‖(X̂+Δ)ᵀw − y‖₂`, equal to `‖X̂ᵀw − y‖₂ + ε‖w‖₂`.
    pub attained_value: f64,
}

impl PerturbationWitness {
    /// Materialize `Δ` as a dense `n × m` matrix.
    pub fn delta_dense(&self) -> Mat {
        let n = self.feature_factor.len();
        let m = self.observation_factor.len();
        let mut out = Mat::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                out[(i, j)] = self.scale * self.feature_factor[i] * self.observation_factor[j];
            }
        }
        out
    }
}

/// Construct the perturbation attaining `max_{‖Δ‖≤ε} ‖(X̂+Δ)ᵀw − y‖₂`.
///
/// Degenerate directions (zero residual or zero `w`) fall back to the first
/// canonical basis vector.
pub fn worst_case_perturbation(
    xhat: &Mat,
    w: &Vec64,
    y: &Vec64,
    eps: f64,
) -> Result<PerturbationWitness> {
    let (n, m) = (xhat.nrows(), xhat.ncols());
    if w.len() != n || y.len() != m {
        return Err(Error::dims("worst_case_perturbation shapes"));
    }
    if eps < 0.0 {
        return Err(Error::invalid("eps must be nonnegative"));
    }
    let residual = xhat.tr_mul(w) - y;
    let rnorm = residual.norm();
    let observation_factor = if rnorm > 0.0 {
        &residual / rnorm
    } else {
        canonical(m)
    };
    let wnorm = w.norm();
    let feature_factor = if wnorm > 0.0 { w / wnorm } else { canonical(n) };
    // (X̂+Δ)ᵀw − y = residual + ε (vᵀw) u
    let shifted = &residual + &observation_factor * (eps * feature_factor.dot(w));
    Ok(PerturbationWitness {
        scale: eps,
        feature_factor,
        observation_factor,
        attained_value: shifted.norm(),
    })
}

fn canonical(len: usize) -> Vec64 {
    let mut e = Vec64::zeros(len);
    if len > 0 {
        e[0] = 1.0;
    }
    e
}

/// A point of the reduced dual problem.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub u: Vec64,
    pub t: f64,
    pub v: Vec64,
    pub r: Vec64,
    pub feasible: bool,
    pub value: f64,
}

/// Feasibility test for the dual constraint system
/// `{ Ru = v + r, ‖v‖_∞ ≤ λ, ‖r‖₂ ≤ ε }`.
///
/// Componentwise clipping of `g = Ru` onto the box gives the minimum-norm
/// remainder `r`, so the system is feasible iff that remainder fits in the
/// ε-ball; the test is exact, no auxiliary optimization is needed.
pub fn dual_feasible(u: &Vec64, rp: &ReducedProblem, eps: f64, lam: f64) -> (bool, Vec64, Vec64) {
    let g = &rp.r * u;
    let v = g.map(|gi| gi.clamp(-lam, lam));
    let r = &g - &v;
    (r.norm() <= eps, v, r)
}

/// Dual objective `uᵀc + s√(1 − uᵀu)`; requires `‖u‖₂ ≤ 1`.
///
/// Any `u` that also passes [`dual_feasible`] lower-bounds the primal optimum.
pub fn dual_value(u: &Vec64, rp: &ReducedProblem) -> Result<f64> {
    let sq = u.norm_squared();
    if sq > 1.0 + 1e-9 {
        return Err(Error::invalid(format!(
            "dual_value: ‖u‖ = {} > 1",
            sq.sqrt()
        )));
    }
    Ok(u.dot(&rp.c) + rp.s * (1.0 - sq).max(0.0).sqrt())
}

/// Assemble a full [`DualPoint`] from a candidate `u`.
pub fn dual_point(u: Vec64, rp: &ReducedProblem, eps: f64, lam: f64) -> Result<DualPoint> {
    let (feasible, v, r) = dual_feasible(&u, rp, eps, lam);
    let value = dual_value(&u, rp)?;
    let t = (1.0 - u.norm_squared()).max(0.0).sqrt();
    Ok(DualPoint {
        u,
        t,
        v,
        r,
        feasible,
        value,
    })
}

/// Outcome of the first-subproblem closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubproblemValue {
    Value(f64),
    /// `min_z ‖Qz − y‖₂ + uᵀz` is unbounded below.
    Unbounded,
}

/// Closed form of `f₁(u) = min_z ‖Qz − y‖₂ + uᵀz`:
/// `uᵀK^{-1/2}c + s√(1 − uᵀK⁻¹u)` when `uᵀK⁻¹u < 1`, unbounded when `> 1`.
///
/// Validation tool for the dual derivation; not used on any solve path.
pub fn f1_closed_form_check(u: &Vec64, q: &Mat, y: &Vec64) -> Result<SubproblemValue> {
    if q.nrows() != y.len() || q.ncols() != u.len() {
        return Err(Error::dims("f1_closed_form_check shapes"));
    }
    let gram = q.tr_mul(q);
    let (_, inv_half, _) = psd_roots_with_rank(&gram, DEFAULT_RANK_TOL)?;
    let u_bar = &inv_half * u;
    let c = &inv_half * q.tr_mul(y);
    let yty = y.norm_squared();
    let s = (yty - c.norm_squared()).max(0.0).sqrt();
    let nrm_sq = u_bar.norm_squared();
    if nrm_sq > 1.0 {
        return Ok(SubproblemValue::Unbounded);
    }
    Ok(SubproblemValue::Value(
        u_bar.dot(&c) + s * (1.0 - nrm_sq).max(0.0).sqrt(),
    ))
}
