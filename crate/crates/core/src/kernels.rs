//! Dense linear-algebra primitives: symmetric eigendecomposition, PSD square
//! roots, and solves with "block diagonal plus low rank" matrices.
//!
//! The structured solve is the workhorse of the interior-point method: the
//! barrier Hessian is a block-diagonal matrix plus a handful of dyads, so a
//! matrix-inversion-lemma solve costs `O(n·j² + j³)` with `j` the number of
//! dyads, instead of `O(n³)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::{Mat, Vec64};

/// Absolute floor applied to every relative tolerance in this module.
pub const ABS_FLOOR: f64 = 1e-14;

/// Symmetric eigendecomposition `S = V Λ Vᵀ` with eigenvalues sorted in
/// descending order and orthonormal `V`.
///
/// Rejects inputs whose asymmetry `‖S − Sᵀ‖_F` exceeds `1e-10·‖S‖_F`
/// (with an absolute floor); the remaining asymmetry is symmetrized away
/// before factorizing.
pub fn sym_eig(s: &Mat) -> Result<(Vec64, Mat)> {
    if s.nrows() != s.ncols() {
        return Err(Error::dims(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let norm = s.norm();
    let tolerance = 1e-10 * norm.max(ABS_FLOOR / 1e-10);
    let asymmetry = (s - s.transpose()).norm();
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let n = sym.nrows();
    let eig = sym
        .symmetric_eigen_try(1e-15, 10_000)
        .ok_or_else(|| Error::FactorizationFailed("symmetric eigen iteration".into()))?;

    // Sort eigenpairs by descending eigenvalue.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Small extension so `sym_eig` can use the fallible nalgebra entry point
/// without `unwrap` on hard inputs.
trait SymmetricEigenTry {
    fn symmetric_eigen_try(self, eps: f64, max_iter: usize)
        -> Option<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>>;
}

impl SymmetricEigenTry for Mat {
    fn symmetric_eigen_try(
        self,
        eps: f64,
        max_iter: usize,
    ) -> Option<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
        nalgebra::SymmetricEigen::try_new(self, eps, max_iter)
    }
}

/// Square root and (pseudo-)inverse square root of a symmetric PSD matrix.
///
/// Eigenvalues below `rank_tol · λ_max` are treated as zero, giving the
/// pseudo-inverse on the range of `K`; an eigenvalue below
/// `−rank_tol · λ_max` means `K` is not a valid Gram matrix.
pub fn psd_sqrt_invsqrt(k: &Mat, rank_tol: f64) -> Result<(Mat, Mat)> {
    let (values, vectors) = sym_eig(k)?;
    let n = values.len();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Mat::zeros(0, 0)));
    }
    let lambda_max = values[0].max(0.0);
    let cut = (rank_tol * lambda_max).max(ABS_FLOOR);
    if values[n - 1] < -cut {
        return Err(Error::Indefinite {
            min_eig: values[n - 1],
        });
    }
    let mut half = DVector::zeros(n);
    let mut inv_half = DVector::zeros(n);
    for i in 0..n {
        if values[i] > cut {
            let r = values[i].sqrt();
            half[i] = r;
            inv_half[i] = 1.0 / r;
        }
    }
    let scale_cols = |d: &DVector<f64>| {
        let mut m = vectors.clone();
        for j in 0..n {
            let mut col = m.column_mut(j);
            col *= d[j];
        }
        m * vectors.transpose()
    };
    Ok((scale_cols(&half), scale_cols(&inv_half)))
}

/// One block of the block-diagonal part `D`.
#[derive(Debug, Clone, Copy)]
pub enum DiagBlock {
    Scalar(f64),
    /// Symmetric 2×2 block `[[a, b], [b, d]]`.
    Pair { a: f64, b: f64, d: f64 },
}

impl DiagBlock {
    fn dim(&self) -> usize {
        match self {
            DiagBlock::Scalar(_) => 1,
            DiagBlock::Pair { .. } => 2,
        }
    }
}

/// Block-diagonal matrix made of scalar entries and symmetric 2×2 blocks.
#[derive(Debug, Clone, Default)]
pub struct BlockDiag {
    blocks: Vec<DiagBlock>,
    dim: usize,
}

impl BlockDiag {
    pub fn new(blocks: Vec<DiagBlock>) -> Self {
        let dim = blocks.iter().map(DiagBlock::dim).sum();
        BlockDiag { blocks, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[DiagBlock] {
        &self.blocks
    }

    /// In-place `v ← D⁻¹ v`, using the closed-form adjugate for 2×2 blocks.
    pub fn solve_in_place(&self, v: &mut [f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dims("BlockDiag::solve_in_place length"));
        }
        let mut at = 0usize;
        for block in &self.blocks {
            match *block {
                DiagBlock::Scalar(s) => {
                    if s == 0.0 || !s.is_finite() {
                        return Err(Error::SingularSystem("zero scalar diagonal block".into()));
                    }
                    v[at] /= s;
                    at += 1;
                }
                DiagBlock::Pair { a, b, d } => {
                    let det = a * d - b * b;
                    if det == 0.0 || !det.is_finite() {
                        return Err(Error::SingularSystem("singular 2x2 diagonal block".into()));
                    }
                    let (x, y) = (v[at], v[at + 1]);
                    v[at] = (d * x - b * y) / det;
                    v[at + 1] = (a * y - b * x) / det;
                    at += 2;
                }
            }
        }
        Ok(())
    }

    /// `D v`, used for Hessian-vector products and testing.
    pub fn apply(&self, v: &Vec64) -> Vec64 {
        let mut out = Vec64::zeros(self.dim);
        let mut at = 0usize;
        for block in &self.blocks {
            match *block {
                DiagBlock::Scalar(s) => {
                    out[at] = s * v[at];
                    at += 1;
                }
                DiagBlock::Pair { a, b, d } => {
                    out[at] = a * v[at] + b * v[at + 1];
                    out[at + 1] = b * v[at] + d * v[at + 1];
                    at += 2;
                }
            }
        }
        out
    }
}

/// `H = D + Σⱼ σⱼ uⱼ uⱼᵀ` with `D` block diagonal, `σⱼ = ±1` and the `uⱼ`
/// stored as columns of `factor`.
#[derive(Debug, Clone)]
pub struct BlockDiagPlusLowRank {
    pub diag: BlockDiag,
    /// `dim × j` matrix whose columns are the dyad vectors.
    pub factor: Mat,
    /// Sign of each dyad, `+1.0` or `-1.0`.
    pub signs: Vec<f64>,
}

impl BlockDiagPlusLowRank {
    pub fn new(diag: BlockDiag, factor: Mat, signs: Vec<f64>) -> Result<Self> {
        if factor.nrows() != diag.dim() {
            return Err(Error::dims("low-rank factor rows != diagonal dimension"));
        }
        if factor.ncols() != signs.len() {
            return Err(Error::dims("one sign per dyad required"));
        }
        Ok(BlockDiagPlusLowRank { diag, factor, signs })
    }

    pub fn dim(&self) -> usize {
        self.diag.dim()
    }

    /// `H v` without materializing `H`.
    pub fn apply(&self, v: &Vec64) -> Vec64 {
        let mut out = self.diag.apply(v);
        if self.factor.ncols() > 0 {
            let mut coeffs = self.factor.tr_mul(v);
            for (j, sign) in self.signs.iter().enumerate() {
                coeffs[j] *= sign;
            }
            out.gemv(1.0, &self.factor, &coeffs, 1.0);
        }
        out
    }
}

/// Solve `H x = rhs` by the matrix inversion lemma.
///
/// Never materializes `H`; the cost is `O(dim·j² + j³)`. Fails if a diagonal
/// block or the j×j capacitance matrix is singular, or if iterative
/// refinement cannot push the residual below `1e-8·‖rhs‖`; the barrier
/// solver treats failures as a request to damp the step.
pub fn structured_solve(h: &BlockDiagPlusLowRank, rhs: &Vec64) -> Result<Vec64> {
    let (x, rel) = solve_refined(h, rhs)?;
    if rel > 1e-8 {
        return Err(Error::SingularSystem(format!(
            "structured solve residual {rel:.3e} after refinement"
        )));
    }
    Ok(x)
}

/// Woodbury solve that returns the best iterate even when refinement cannot
/// reach the accuracy contract (extremely ill-conditioned barrier endgames).
/// One refinement pass, no final verification: the caller only needs a
/// descent direction.
pub(crate) fn structured_solve_best_effort(
    h: &BlockDiagPlusLowRank,
    rhs: &Vec64,
) -> Result<Vec64> {
    if rhs.len() != h.dim() {
        return Err(Error::dims("structured_solve rhs length"));
    }
    let factor = WoodburyFactor::new(h)?;
    let mut x = factor.solve(h, rhs)?;
    let residual = rhs - h.apply(&x);
    if residual.norm() > 1e-13 * rhs.norm().max(ABS_FLOOR) {
        x += factor.solve(h, &residual)?;
    }
    Ok(x)
}

fn solve_refined(h: &BlockDiagPlusLowRank, rhs: &Vec64) -> Result<(Vec64, f64)> {
    if rhs.len() != h.dim() {
        return Err(Error::dims("structured_solve rhs length"));
    }
    let rhs_norm = rhs.norm().max(ABS_FLOOR);
    let factor = WoodburyFactor::new(h)?;
    let mut x = factor.solve(h, rhs)?;
    let mut best = x.clone();
    let mut best_rel = (rhs - h.apply(&x)).norm() / rhs_norm;
    for _ in 0..3 {
        if best_rel <= 1e-13 {
            break;
        }
        let residual = rhs - h.apply(&x);
        let correction = factor.solve(h, &residual)?;
        x += &correction;
        let rel = (rhs - h.apply(&x)).norm() / rhs_norm;
        if rel < best_rel {
            best_rel = rel;
            best = x.clone();
        } else {
            break;
        }
    }
    Ok((best, best_rel))
}

/// Woodbury pieces shared by the initial solve and its refinement passes:
/// `W = D⁻¹U` and an LU of the capacitance `C = S + UᵀW`.
struct WoodburyFactor {
    w: Option<Mat>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl WoodburyFactor {
    fn new(h: &BlockDiagPlusLowRank) -> Result<Self> {
        if h.factor.ncols() == 0 {
            return Ok(WoodburyFactor { w: None, lu: None });
        }
        let mut w = h.factor.clone();
        for mut col in w.column_iter_mut() {
            h.diag.solve_in_place(col.as_mut_slice())?;
        }
        // C = S + UᵀD⁻¹U is symmetric; fill it from contiguous column dots
        // (nalgebra's tr_mul takes a slow path for this shape).
        let j = h.factor.ncols();
        let mut cap = Mat::zeros(j, j);
        for a in 0..j {
            let ua = h.factor.column(a);
            for b in a..j {
                let v = ua.dot(&w.column(b));
                cap[(a, b)] = v;
                cap[(b, a)] = v;
            }
            cap[(a, a)] += h.signs[a];
        }
        Ok(WoodburyFactor {
            w: Some(w),
            lu: Some(cap.lu()),
        })
    }

    fn solve(&self, h: &BlockDiagPlusLowRank, rhs: &Vec64) -> Result<Vec64> {
        let mut y = rhs.clone();
        h.diag.solve_in_place(y.as_mut_slice())?;
        let (Some(w), Some(lu)) = (&self.w, &self.lu) else {
            return Ok(y);
        };
        let z = h.factor.tr_mul(&y);
        let t = lu
            .solve(&z)
            .ok_or_else(|| Error::SingularSystem("singular capacitance matrix".into()))?;
        y.gemv(-1.0, w, &t, 1.0);
        Ok(y)
    }
}
