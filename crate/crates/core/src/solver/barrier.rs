//! Log-barrier Newton engine for
//!
//! ```text
//!   min_w ‖Aw − b‖₂ + ε‖w‖₂ + λ‖w‖₁
//! ```
//!
//! reformulated with `w = p − q`, `p, q ≥ 0`, an epigraph variable `σ` for
//! the residual norm and `τ` for `‖w‖₂`:
//!
//! ```text
//!   φ_γ = γ(σ + ετ + λ(1ᵀp + 1ᵀq))
//!         − log(τ² − ‖p−q‖²) − log(σ² − ‖A(p−q) − b‖²)
//!         − Σ log pᵢ − Σ log qᵢ − log σ − log τ
//! ```
//!
//! The Hessian of every log term is block diagonal plus a dyad, so a Newton
//! step costs `O(n·j² + j³)` with `j ≤ k+3` dyads on reduced instances
//! (`A = [Rᵀ; 0]`), and one `n×n` factorization on full instances where the
//! Gram matrix `AᵀA` is cached across iterations.
//!
//! When `ε = 0` the `τ` variable and its barrier terms are dropped; when
//! `λ = 0` the positive split (and its logs) is dropped and the step runs in
//! `w` directly. `ε = λ = 0` never reaches this module (plain least squares).

use crate::error::{Error, Result};
use crate::kernels::{structured_solve_best_effort, BlockDiag, BlockDiagPlusLowRank, DiagBlock};
use crate::{Mat, Vec64};

use super::SolverConfig;

/// Variable arrangement of the barrier problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layout {
    /// `λ > 0, ε > 0`: interleaved `(pᵢ, qᵢ)` pairs, then `σ`, then `τ`.
    SplitTau,
    /// `λ > 0, ε = 0`: interleaved `(pᵢ, qᵢ)` pairs, then `σ`.
    Split,
    /// `λ = 0, ε > 0`: `w` directly, then `σ`, then `τ`.
    FreeTau,
}

impl Layout {
    pub(crate) fn choose(eps: f64, lam: f64) -> Option<Layout> {
        match (lam > 0.0, eps > 0.0) {
            (true, true) => Some(Layout::SplitTau),
            (true, false) => Some(Layout::Split),
            (false, true) => Some(Layout::FreeTau),
            (false, false) => None, // least-squares path, handled by the caller
        }
    }

    fn split(self) -> bool {
        !matches!(self, Layout::FreeTau)
    }

    fn with_tau(self) -> bool {
        !matches!(self, Layout::Split)
    }

    /// Number of logarithm terms in the barrier; `count/γ` drives the
    /// outer-loop stopping rule.
    fn log_terms(self, n: usize) -> f64 {
        match self {
            Layout::SplitTau => (2 * n + 4) as f64,
            Layout::Split => (2 * n + 2) as f64,
            Layout::FreeTau => 4.0,
        }
    }
}

/// The design matrix as the barrier engine sees it.
pub(crate) enum Design<'a> {
    /// `A = [Rᵀ; 0]`, `b = (c, s)`: the reduced robust instance. All
    /// products run through `R`, so the cost never involves `m`.
    Stacked { r: &'a Mat, c: &'a Vec64, s: f64 },
    /// `A = Xᵀ` (`m × n`) with the Gram matrix `G = X Xᵀ` precomputed once;
    /// every Newton iteration is then `O(n²)` assembly plus one `n×n`
    /// Cholesky, independent of `m`.
    Gram {
        g: Mat,
        /// `X y`.
        xy: Vec64,
        /// `yᵀ y`.
        yty: f64,
    },
}

impl Design<'_> {
    pub(crate) fn n(&self) -> usize {
        match self {
            Design::Stacked { r, .. } => r.nrows(),
            Design::Gram { g, .. } => g.nrows(),
        }
    }

    fn b_norm_sq(&self) -> f64 {
        match self {
            Design::Stacked { c, s, .. } => c.norm_squared() + s * s,
            Design::Gram { yty, .. } => *yty,
        }
    }

    /// `(Aᵀ(Aw − b), ‖Aw − b‖²)`.
    fn residual_parts(&self, w: &Vec64) -> (Vec64, f64) {
        match self {
            Design::Stacked { r, c, s } => {
                let fit = r.tr_mul(w) - *c;
                let rsq = fit.norm_squared() + s * s;
                (*r * fit, rsq)
            }
            Design::Gram { g, xy, yty } => {
                let gw = g * w;
                let at_r = &gw - xy;
                let rsq = (w.dot(&gw) - 2.0 * w.dot(xy) + yty).max(0.0);
                (at_r, rsq)
            }
        }
    }

    /// `‖A Δw‖²` for the exact line-search quadratic.
    fn step_energy(&self, dw: &Vec64) -> f64 {
        match self {
            Design::Stacked { r, .. } => r.tr_mul(dw).norm_squared(),
            Design::Gram { g, .. } => dw.dot(&(g * dw)).max(0.0),
        }
    }
}

/// Interior point of the barrier problem.
#[derive(Debug, Clone)]
struct State {
    layout: Layout,
    /// Positive part (split layouts) or `w` itself (free layout).
    p: Vec64,
    /// Negative part; empty in the free layout.
    q: Vec64,
    sigma: f64,
    tau: f64,
}

impl State {
    fn w(&self) -> Vec64 {
        if self.layout.split() {
            &self.p - &self.q
        } else {
            self.p.clone()
        }
    }
}

/// One candidate Newton displacement in the same arrangement as `State`.
#[derive(Debug, Clone)]
struct Step {
    dp: Vec64,
    dq: Vec64,
    dsigma: f64,
    dtau: f64,
}

pub(crate) struct StageTrace {
    #[allow(dead_code)]
    pub gamma: f64,
    /// φ_γ/γ after every accepted Newton step of the stage.
    #[allow(dead_code)]
    pub phi: Vec<f64>,
}

pub(crate) struct BarrierOutcome {
    pub w: Vec64,
    pub iterations: usize,
    pub converged: bool,
    pub numerical: bool,
    /// Per-stage φ values; inspected by the descent tests.
    #[allow(dead_code)]
    pub trace: Vec<StageTrace>,
}

const ARMIJO_SLOPE: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const BOUNDARY_FRACTION: f64 = 0.99;
const INNER_DECREMENT_TOL: f64 = 1e-8;
/// Below this squared decrement the damped phase switches to full Newton
/// steps guarded only by strict feasibility.
const FULL_STEP_REGION: f64 = 0.0625;
const MAX_STAGES: usize = 60;

pub(crate) fn minimize(
    design: &Design,
    eps: f64,
    lam: f64,
    cfg: &SolverConfig,
) -> Result<BarrierOutcome> {
    let layout = Layout::choose(eps, lam)
        .ok_or_else(|| Error::invalid("barrier engine needs eps > 0 or lam > 0"))?;
    let n = design.n();
    let b_norm = design.b_norm_sq().sqrt();

    // Strictly interior start: w = 0, generous slacks.
    let delta = 0.5;
    let mut state = State {
        layout,
        p: Vec64::from_element(n, if layout.split() { 1.0 } else { 0.0 }),
        q: if layout.split() {
            Vec64::from_element(n, 1.0)
        } else {
            Vec64::zeros(0)
        },
        sigma: b_norm * (1.0 + delta) + 1.0,
        tau: 2.0 * (n.max(1) as f64).sqrt() * (1.0 + delta),
    };

    let log_terms = layout.log_terms(n);
    let mut gamma = 1.0;
    let mut iterations = 0usize;
    let mut trace = Vec::new();
    let mut converged_stage = false;
    let mut numerical = false;

    for _stage in 0..MAX_STAGES {
        let mut phi_log = Vec::new();
        converged_stage = false;
        for _ in 0..cfg.max_newton {
            let ctx = IterContext::build(design, &state, eps, lam, gamma);
            // The Newton system is intentionally solved best-effort: at the
            // barrier endgame its conditioning reaches 1/eps and only the
            // descent property matters. Non-descent directions fall back to
            // |D|-preconditioned steepest descent.
            let mut step = newton_step(design, &state, &ctx, gamma, eps, lam).ok();
            if let Some(ref s) = step {
                if directional_derivative(&ctx, s) >= 0.0 {
                    step = None;
                }
            }
            let step = match step.or_else(|| fallback_step(&state, &ctx)) {
                Some(s) => s,
                None => {
                    // Gradient numerically zero at this γ.
                    converged_stage = true;
                    break;
                }
            };
            let slope = directional_derivative(&ctx, &step);
            let decrement_sq = -slope;
            if decrement_sq <= 2.0 * INNER_DECREMENT_TOL {
                converged_stage = true;
                break;
            }
            if !decrement_sq.is_finite() {
                numerical = true;
                break;
            }
            match line_search(design, &mut state, &ctx, &step, slope, gamma, eps, lam) {
                LineSearch::Accepted(phi) => {
                    iterations += 1;
                    phi_log.push(phi);
                }
                LineSearch::Stalled => {
                    // Progress is below floating-point resolution at this γ;
                    // the certificate construction decides how good the
                    // iterate really is.
                    converged_stage = true;
                    break;
                }
            }
        }
        trace.push(StageTrace {
            gamma,
            phi: phi_log,
        });
        if numerical {
            break;
        }
        let (_, rsq) = design.residual_parts(&state.w());
        let objective_now = rsq.sqrt() + eps * state.w().norm() + lam * l1(&state);
        if log_terms / gamma < cfg.tol * (1.0 + objective_now.abs()) {
            break;
        }
        gamma *= cfg.mu;
    }

    Ok(BarrierOutcome {
        w: state.w(),
        iterations,
        converged: converged_stage && !numerical,
        numerical,
        trace,
    })
}

fn l1(state: &State) -> f64 {
    if state.layout.split() {
        state.p.sum() + state.q.sum()
    } else {
        state.p.lp_norm(1)
    }
}

/// Everything the gradient, Hessian and line search share at one iterate.
struct IterContext {
    w: Vec64,
    at_r: Vec64,
    rsq: f64,
    wsq: f64,
    /// 2/d1 (0 without τ) and 2/d2.
    c1: f64,
    c2: f64,
    grad: Grad,
}

/// Gradient in the `State` arrangement.
struct Grad {
    gp: Vec64,
    gq: Vec64,
    gsigma: f64,
    gtau: f64,
}

impl IterContext {
    fn build(design: &Design, state: &State, eps: f64, lam: f64, gamma: f64) -> Self {
        let w = state.w();
        let (at_r, rsq) = design.residual_parts(&w);
        let wsq = w.norm_squared();
        let with_tau = state.layout.with_tau();
        let d1 = if with_tau {
            state.tau * state.tau - wsq
        } else {
            1.0
        };
        let d2 = state.sigma * state.sigma - rsq;
        let c1 = if with_tau { 2.0 / d1 } else { 0.0 };
        let c2 = 2.0 / d2;
        let n = w.len();

        let grad = if state.layout.split() {
            let mut gp = Vec64::zeros(n);
            let mut gq = Vec64::zeros(n);
            for i in 0..n {
                let shared = c1 * w[i] + c2 * at_r[i];
                gp[i] = gamma * lam + shared - 1.0 / state.p[i];
                gq[i] = gamma * lam - shared - 1.0 / state.q[i];
            }
            Grad {
                gp,
                gq,
                gsigma: gamma - c2 * state.sigma - 1.0 / state.sigma,
                gtau: if with_tau {
                    gamma * eps - c1 * state.tau - 1.0 / state.tau
                } else {
                    0.0
                },
            }
        } else {
            let mut gp = Vec64::zeros(n);
            for i in 0..n {
                gp[i] = c1 * w[i] + c2 * at_r[i];
            }
            Grad {
                gp,
                gq: Vec64::zeros(0),
                gsigma: gamma - c2 * state.sigma - 1.0 / state.sigma,
                gtau: gamma * eps - c1 * state.tau - 1.0 / state.tau,
            }
        };

        IterContext {
            w,
            at_r,
            rsq,
            wsq,
            c1,
            c2,
            grad,
        }
    }
}

fn directional_derivative(ctx: &IterContext, step: &Step) -> f64 {
    let mut slope = ctx.grad.gp.dot(&step.dp) + ctx.grad.gsigma * step.dsigma;
    if ctx.grad.gq.len() > 0 {
        slope += ctx.grad.gq.dot(&step.dq);
    }
    slope += ctx.grad.gtau * step.dtau;
    slope
}

// ---------------------------------------------------------------------------
// Newton step computation
// ---------------------------------------------------------------------------

fn newton_step(
    design: &Design,
    state: &State,
    ctx: &IterContext,
    gamma: f64,
    eps: f64,
    lam: f64,
) -> Result<Step> {
    let _ = (gamma, eps, lam);
    match design {
        Design::Stacked { r, .. } => woodbury_step(r, state, ctx),
        Design::Gram { g, .. } => gram_schur_step(g, state, ctx),
    }
}

/// Flat index layout used by the Woodbury backend:
/// split: `(p₁, q₁, …, p_n, q_n, σ[, τ])`, free: `(w₁, …, w_n, σ[, τ])`.
fn woodbury_step(r: &Mat, state: &State, ctx: &IterContext) -> Result<Step> {
    let n = ctx.w.len();
    let split = state.layout.split();
    let with_tau = state.layout.with_tau();
    let stride = if split { 2 * n } else { n };
    let dim = stride + 1 + usize::from(with_tau);
    let sigma_at = stride;
    let tau_at = stride + 1;

    let h = assemble_structured(r, state, ctx);
    let mut rhs = Vec64::zeros(dim);
    for i in 0..n {
        if split {
            rhs[2 * i] = -ctx.grad.gp[i];
            rhs[2 * i + 1] = -ctx.grad.gq[i];
        } else {
            rhs[i] = -ctx.grad.gp[i];
        }
    }
    rhs[sigma_at] = -ctx.grad.gsigma;
    if with_tau {
        rhs[tau_at] = -ctx.grad.gtau;
    }

    let sol = structured_solve_best_effort(&h, &rhs)?;
    let mut dp = Vec64::zeros(n);
    let mut dq = Vec64::zeros(if split { n } else { 0 });
    for i in 0..n {
        if split {
            dp[i] = sol[2 * i];
            dq[i] = sol[2 * i + 1];
        } else {
            dp[i] = sol[i];
        }
    }
    Ok(Step {
        dp,
        dq,
        dsigma: sol[sigma_at],
        dtau: if with_tau { sol[tau_at] } else { 0.0 },
    })
}

/// Dense backend for full instances (`Split` layout only): rotate each
/// `(pᵢ, qᵢ)` pair to `u₁ = (p+q)/√2`, `u₂ = (p−q)/√2`; the Gram tile then
/// lives purely on `u₂`, `u₁` is eliminated diagonally, and the single
/// `∇l₂` dyad is folded by Sherman–Morrison around one `n×n` Cholesky.
fn gram_schur_step(g: &Mat, state: &State, ctx: &IterContext) -> Result<Step> {
    debug_assert_eq!(state.layout, Layout::Split);
    let n = ctx.w.len();
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut da = Vec64::zeros(n); // u₁u₁ and u₂u₂ diagonal
    let mut dc = Vec64::zeros(n); // u₁u₂ coupling
    for i in 0..n {
        let hp = 1.0 / (state.p[i] * state.p[i]);
        let hq = 1.0 / (state.q[i] * state.q[i]);
        da[i] = 0.5 * (hp + hq);
        dc[i] = 0.5 * (hp - hq);
    }

    // Schur complement of the u₁ block: S = 2c₂G + diag(da − dc²/da).
    let mut s = g * (2.0 * ctx.c2);
    for i in 0..n {
        s[(i, i)] += da[i] - dc[i] * dc[i] / da[i];
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("gram-schur base not positive definite".into()))?;

    let e_sigma = 1.0 / (state.sigma * state.sigma) - ctx.c2;
    if e_sigma == 0.0 {
        return Err(Error::SingularSystem("zero sigma pivot".into()));
    }
    // ∇l₂ in (u₂, σ) coordinates.
    let dyad_u2 = &ctx.at_r * (sqrt2 * ctx.c2);
    let dyad_sigma = -ctx.c2 * state.sigma;

    // rhs in rotated coordinates, with u₁ eliminated.
    let mut r_u2 = Vec64::zeros(n);
    let mut r_u1 = Vec64::zeros(n);
    for i in 0..n {
        r_u2[i] = (-ctx.grad.gp[i] + ctx.grad.gq[i]) / sqrt2;
        r_u1[i] = (-ctx.grad.gp[i] - ctx.grad.gq[i]) / sqrt2;
    }
    let r_sigma = -ctx.grad.gsigma;
    let mut rhs_core = r_u2.clone();
    for i in 0..n {
        rhs_core[i] -= dc[i] / da[i] * r_u1[i];
    }

    // Sherman–Morrison on blkdiag(S, e_sigma) + dyad·dyadᵀ.
    let z0_u2 = chol.solve(&rhs_core);
    let z0_sigma = r_sigma / e_sigma;
    let z1_u2 = chol.solve(&dyad_u2);
    let z1_sigma = dyad_sigma / e_sigma;
    let denom = 1.0 + dyad_u2.dot(&z1_u2) + dyad_sigma * z1_sigma;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularSystem("gram-schur dyad fold".into()));
    }
    let coef = (dyad_u2.dot(&z0_u2) + dyad_sigma * z0_sigma) / denom;
    let u2 = &z0_u2 - &z1_u2 * coef;
    let dsigma = z0_sigma - z1_sigma * coef;

    // Back-substitute u₁, rotate back to (p, q).
    let mut dp = Vec64::zeros(n);
    let mut dq = Vec64::zeros(n);
    for i in 0..n {
        let u1 = (r_u1[i] - dc[i] * u2[i]) / da[i];
        dp[i] = (u1 + u2[i]) / sqrt2;
        dq[i] = (u1 - u2[i]) / sqrt2;
    }
    Ok(Step {
        dp,
        dq,
        dsigma,
        dtau: 0.0,
    })
}

/// Preconditioned steepest descent used when the Newton solve fails.
fn fallback_step(state: &State, ctx: &IterContext) -> Option<Step> {
    let n = ctx.w.len();
    let split = state.layout.split();
    let mut dp = Vec64::zeros(n);
    let mut dq = Vec64::zeros(if split { n } else { 0 });
    for i in 0..n {
        if split {
            let a = (ctx.c1 + 1.0 / (state.p[i] * state.p[i])).abs().max(1e-14);
            let d = (ctx.c1 + 1.0 / (state.q[i] * state.q[i])).abs().max(1e-14);
            dp[i] = -ctx.grad.gp[i] / a;
            dq[i] = -ctx.grad.gq[i] / d;
        } else {
            dp[i] = -ctx.grad.gp[i] / ctx.c1.abs().max(1e-14);
        }
    }
    let es = (1.0 / (state.sigma * state.sigma) - ctx.c2).abs().max(1e-14);
    let dsigma = -ctx.grad.gsigma / es;
    let dtau = if state.layout.with_tau() {
        let et = (1.0 / (state.tau * state.tau) - ctx.c1).abs().max(1e-14);
        -ctx.grad.gtau / et
    } else {
        0.0
    };
    let step = Step {
        dp,
        dq,
        dsigma,
        dtau,
    };
    if directional_derivative(ctx, &step) < 0.0 {
        Some(step)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Line search
// ---------------------------------------------------------------------------

enum LineSearch {
    /// Step accepted; carries φ_γ/γ at the new point.
    Accepted(f64),
    Stalled,
}

/// φ_γ/γ at `state + α·step`, or `None` outside the barrier domain.
/// Works from the exact quadratics of `‖resid‖²` and `‖w‖²` along the step.
#[allow(clippy::too_many_arguments)]
fn phi_scaled_at(
    state: &State,
    step: &Step,
    alpha: f64,
    quad: &StepQuadratics,
    gamma: f64,
    eps: f64,
    lam: f64,
) -> Option<f64> {
    let split = state.layout.split();
    let with_tau = state.layout.with_tau();
    let n = state.p.len();
    let sigma = state.sigma + alpha * step.dsigma;
    if sigma <= 0.0 {
        return None;
    }
    let tau = state.tau + alpha * step.dtau;
    if with_tau && tau <= 0.0 {
        return None;
    }
    let rsq = quad.rsq + alpha * quad.r_lin + alpha * alpha * quad.r_quad;
    let d2 = sigma * sigma - rsq;
    // Keep a relative margin: a state accepted within rounding distance of
    // the cone boundary would leave the domain once the residual is
    // recomputed exactly.
    if d2 <= 1e-14 * sigma * sigma {
        return None;
    }
    let mut linear = sigma;
    let mut logs = -d2.ln() - sigma.ln();
    if with_tau {
        let wsq = quad.wsq + alpha * quad.w_lin + alpha * alpha * quad.w_quad;
        let d1 = tau * tau - wsq;
        if d1 <= 1e-14 * tau * tau {
            return None;
        }
        linear += eps * tau;
        logs += -d1.ln() - tau.ln();
    }
    if split {
        let mut sum_pq = 0.0;
        for i in 0..n {
            let pi = state.p[i] + alpha * step.dp[i];
            let qi = state.q[i] + alpha * step.dq[i];
            if pi <= 0.0 || qi <= 0.0 {
                return None;
            }
            sum_pq += pi + qi;
            logs += -pi.ln() - qi.ln();
        }
        linear += lam * sum_pq;
    }
    Some(linear + logs / gamma)
}

struct StepQuadratics {
    rsq: f64,
    r_lin: f64,
    r_quad: f64,
    wsq: f64,
    w_lin: f64,
    w_quad: f64,
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    design: &Design,
    state: &mut State,
    ctx: &IterContext,
    step: &Step,
    slope: f64,
    gamma: f64,
    eps: f64,
    lam: f64,
) -> LineSearch {
    let split = state.layout.split();
    let dw = if split { &step.dp - &step.dq } else { step.dp.clone() };
    let quad = StepQuadratics {
        rsq: ctx.rsq,
        r_lin: 2.0 * dw.dot(&ctx.at_r),
        r_quad: design.step_energy(&dw),
        wsq: ctx.wsq,
        w_lin: 2.0 * dw.dot(&ctx.w),
        w_quad: dw.norm_squared(),
    };

    // Longest step keeping the sign constraints strictly feasible. In the
    // free layout `p` holds the unconstrained `w`, so only σ and τ apply.
    let mut alpha_max = f64::INFINITY;
    let mut shrink = |value: f64, delta: f64| {
        if delta < 0.0 {
            alpha_max = alpha_max.min(-value / delta);
        }
    };
    if split {
        for i in 0..state.p.len() {
            shrink(state.p[i], step.dp[i]);
        }
        for i in 0..state.q.len() {
            shrink(state.q[i], step.dq[i]);
        }
    }
    shrink(state.sigma, step.dsigma);
    if state.layout.with_tau() {
        shrink(state.tau, step.dtau);
    }
    let mut alpha = (BOUNDARY_FRACTION * alpha_max).min(1.0);

    let decrement_sq = -slope;
    let full_newton_zone = decrement_sq < FULL_STEP_REGION;
    // The iterate can sit within rounding distance of the boundary after an
    // aggressive step; that is the precision floor for this γ.
    let Some(phi0) = phi_scaled_at(state, step, 0.0, &quad, gamma, eps, lam) else {
        return LineSearch::Stalled;
    };
    let scaled_slope = slope / gamma;

    while alpha > 1e-16 {
        match phi_scaled_at(state, step, alpha, &quad, gamma, eps, lam) {
            Some(phi) => {
                let armijo = phi <= phi0 + ARMIJO_SLOPE * alpha * scaled_slope;
                // Inside the quadratic-convergence region the damped-Newton
                // theory guarantees descent; skip the Armijo comparison,
                // which is below floating-point resolution at large γ.
                if armijo || (full_newton_zone && phi <= phi0 + 1e-12 * (1.0 + phi0.abs())) {
                    apply_step(state, step, alpha);
                    return LineSearch::Accepted(phi);
                }
            }
            None => {}
        }
        alpha *= BACKTRACK;
    }
    LineSearch::Stalled
}

fn apply_step(state: &mut State, step: &Step, alpha: f64) {
    state.p.axpy(alpha, &step.dp, 1.0);
    if state.q.len() > 0 {
        state.q.axpy(alpha, &step.dq, 1.0);
    }
    state.sigma += alpha * step.dsigma;
    if state.layout.with_tau() {
        state.tau += alpha * step.dtau;
    }
}

// ---------------------------------------------------------------------------
// Derivative checks used by the finite-difference tests
// ---------------------------------------------------------------------------

/// φ_γ and its analytic gradient/Hessian-vector product at an arbitrary
/// interior point, exposed for finite-difference validation.
#[doc(hidden)]
pub struct BarrierProbe<'a> {
    design: Design<'a>,
    layout: Layout,
    eps: f64,
    lam: f64,
    gamma: f64,
}

impl<'a> BarrierProbe<'a> {
    pub fn reduced(r: &'a Mat, c: &'a Vec64, s: f64, eps: f64, lam: f64, gamma: f64) -> Self {
        let layout = Layout::choose(eps, lam).expect("probe needs eps > 0 or lam > 0");
        BarrierProbe {
            design: Design::Stacked { r, c, s },
            layout,
            eps,
            lam,
            gamma,
        }
    }

    /// Dimension of the flat variable vector.
    pub fn dim(&self, n: usize) -> usize {
        match self.layout {
            Layout::SplitTau => 2 * n + 2,
            Layout::Split => 2 * n + 1,
            Layout::FreeTau => n + 2,
        }
    }

    fn unpack(&self, flat: &Vec64) -> State {
        let n = self.design.n();
        match self.layout {
            Layout::SplitTau | Layout::Split => {
                let mut p = Vec64::zeros(n);
                let mut q = Vec64::zeros(n);
                for i in 0..n {
                    p[i] = flat[2 * i];
                    q[i] = flat[2 * i + 1];
                }
                State {
                    layout: self.layout,
                    p,
                    q,
                    sigma: flat[2 * n],
                    tau: if self.layout.with_tau() { flat[2 * n + 1] } else { 1.0 },
                }
            }
            Layout::FreeTau => {
                let p = Vec64::from_iterator(n, (0..n).map(|i| flat[i]));
                State {
                    layout: self.layout,
                    p,
                    q: Vec64::zeros(0),
                    sigma: flat[n],
                    tau: flat[n + 1],
                }
            }
        }
    }

    /// φ_γ at a flat interior point, `None` outside the domain.
    pub fn value(&self, flat: &Vec64) -> Option<f64> {
        let state = self.unpack(flat);
        let step = Step {
            dp: Vec64::zeros(state.p.len()),
            dq: Vec64::zeros(state.q.len()),
            dsigma: 0.0,
            dtau: 0.0,
        };
        let w = state.w();
        let (_, rsq) = self.design.residual_parts(&w);
        let quad = StepQuadratics {
            rsq,
            r_lin: 0.0,
            r_quad: 0.0,
            wsq: w.norm_squared(),
            w_lin: 0.0,
            w_quad: 0.0,
        };
        phi_scaled_at(&state, &step, 0.0, &quad, self.gamma, self.eps, self.lam)
            .map(|phi| phi * self.gamma)
    }

    /// Analytic gradient of φ_γ at a flat interior point.
    pub fn gradient(&self, flat: &Vec64) -> Vec64 {
        let state = self.unpack(flat);
        let ctx = IterContext::build(&self.design, &state, self.eps, self.lam, self.gamma);
        let n = state.p.len();
        let mut out = Vec64::zeros(flat.len());
        match self.layout {
            Layout::SplitTau | Layout::Split => {
                for i in 0..n {
                    out[2 * i] = ctx.grad.gp[i];
                    out[2 * i + 1] = ctx.grad.gq[i];
                }
                out[2 * n] = ctx.grad.gsigma;
                if self.layout.with_tau() {
                    out[2 * n + 1] = ctx.grad.gtau;
                }
            }
            Layout::FreeTau => {
                for i in 0..n {
                    out[i] = ctx.grad.gp[i];
                }
                out[n] = ctx.grad.gsigma;
                out[n + 1] = ctx.grad.gtau;
            }
        }
        out
    }

    /// Analytic Hessian-vector product of φ_γ at a flat interior point.
    pub fn hessian_vec(&self, flat: &Vec64, v: &Vec64) -> Vec64 {
        let state = self.unpack(flat);
        let ctx = IterContext::build(&self.design, &state, self.eps, self.lam, self.gamma);
        let Design::Stacked { r, .. } = &self.design else {
            unreachable!("probe only wraps reduced designs");
        };
        let h = assemble_structured(r, &state, &ctx);
        h.apply(v)
    }
}

/// Assemble the Hessian of φ_γ as a `BlockDiagPlusLowRank` (shared with
/// `woodbury_step`, re-exposed for the probe).
fn assemble_structured(r: &Mat, state: &State, ctx: &IterContext) -> BlockDiagPlusLowRank {
    let n = ctx.w.len();
    let k = r.ncols();
    let split = state.layout.split();
    let with_tau = state.layout.with_tau();
    let stride = if split { 2 * n } else { n };
    let dim = stride + 1 + usize::from(with_tau);
    let sigma_at = stride;
    let tau_at = stride + 1;

    let mut blocks = Vec::with_capacity(n + 2);
    if split {
        for i in 0..n {
            blocks.push(DiagBlock::Pair {
                a: ctx.c1 + 1.0 / (state.p[i] * state.p[i]),
                b: -ctx.c1,
                d: ctx.c1 + 1.0 / (state.q[i] * state.q[i]),
            });
        }
    } else {
        for _ in 0..n {
            blocks.push(DiagBlock::Scalar(ctx.c1));
        }
    }
    blocks.push(DiagBlock::Scalar(
        1.0 / (state.sigma * state.sigma) - ctx.c2,
    ));
    if with_tau {
        blocks.push(DiagBlock::Scalar(1.0 / (state.tau * state.tau) - ctx.c1));
    }

    let dyads = k + 1 + usize::from(with_tau);
    let mut factor = Mat::zeros(dim, dyads);
    let sqrt_c2 = ctx.c2.sqrt();
    for l in 0..k {
        let mut col = factor.column_mut(l);
        for i in 0..n {
            let v = sqrt_c2 * r[(i, l)];
            if split {
                col[2 * i] = v;
                col[2 * i + 1] = -v;
            } else {
                col[i] = v;
            }
        }
    }
    {
        let mut col = factor.column_mut(k);
        for i in 0..n {
            let v = ctx.c2 * ctx.at_r[i];
            if split {
                col[2 * i] = v;
                col[2 * i + 1] = -v;
            } else {
                col[i] = v;
            }
        }
        col[sigma_at] = -ctx.c2 * state.sigma;
    }
    if with_tau {
        let mut col = factor.column_mut(k + 1);
        for i in 0..n {
            let v = ctx.c1 * ctx.w[i];
            if split {
                col[2 * i] = v;
                col[2 * i + 1] = -v;
            } else {
                col[i] = v;
            }
        }
        col[tau_at] = -ctx.c1 * state.tau;
    }

    BlockDiagPlusLowRank::new(BlockDiag::new(blocks), factor, vec![1.0; dyads])
        .expect("consistent dimensions by construction")
}
