//! Low-rank sketching `X ≈ P Qᵀ` by randomized subspace (power) iteration,
//! plus cheap row-deletion views used by the multi-instance drivers.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{Mat, Vec64};

/// Anything that behaves like an `n × m` matrix for sketching purposes.
///
/// Only products against skinny dense matrices are required, so both dense
/// matrices and sparse formats qualify.
pub trait MatrixLike {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `X · B` with `B` of shape `m × j`.
    fn mul_dense(&self, b: &Mat) -> Mat;
    /// `Xᵀ · B` with `B` of shape `n × j`.
    fn tr_mul_dense(&self, b: &Mat) -> Mat;
    fn frob_sq(&self) -> f64;
    /// `‖X − P Qᵀ‖_F²` computed directly (no difference-of-squares cancellation).
    fn residual_frob_sq(&self, p: &Mat, q: &Mat) -> f64;
}

impl MatrixLike for Mat {
    fn nrows(&self) -> usize {
        DMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DMatrix::ncols(self)
    }
    fn mul_dense(&self, b: &Mat) -> Mat {
        self * b
    }
    fn tr_mul_dense(&self, b: &Mat) -> Mat {
        self.tr_mul(b)
    }
    fn frob_sq(&self) -> f64 {
        self.norm_squared()
    }
    fn residual_frob_sq(&self, p: &Mat, q: &Mat) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.ncols() {
            let approx_col = p * q.row(j).transpose();
            acc += (self.column(j) - approx_col).norm_squared();
        }
        acc
    }
}

/// Which side of the sketch a row deletion acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Rows of `P`; deleting feature `j` removes row `j` of `P`.
    Features,
    /// Rows of `Q`; deleting observation `i` removes row `i` of `Q`.
    Observations,
}

/// Bookkeeping attached to every sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMeta {
    pub power_iters: usize,
    pub seed: u64,
    /// Estimated `‖X − P Qᵀ‖₂`, when it has been measured.
    pub spectral_error: Option<f64>,
}

/// Low-rank factorization `X ≈ P Qᵀ` (`P: n×k`, `Q: m×k`).
///
/// Row deletions produce views that share the factor storage and only record
/// which rows survive, so leave-one-out and cross-validation drivers can
/// derive per-instance sketches in `O(1)` beyond index bookkeeping.
#[derive(Debug, Clone)]
pub struct Sketch {
    p: Arc<Mat>,
    q: Arc<Mat>,
    p_rows: Option<Arc<Vec<usize>>>,
    q_rows: Option<Arc<Vec<usize>>>,
    meta: SketchMeta,
}

impl Sketch {
    pub fn from_factors(p: Mat, q: Mat, meta: SketchMeta) -> Result<Self> {
        if p.ncols() != q.ncols() {
            return Err(Error::dims("P and Q must share the sketch rank"));
        }
        Ok(Sketch {
            p: Arc::new(p),
            q: Arc::new(q),
            p_rows: None,
            q_rows: None,
            meta,
        })
    }

    /// Number of features in this view.
    pub fn n(&self) -> usize {
        self.p_rows.as_ref().map_or(self.p.nrows(), |r| r.len())
    }

    /// Number of observations in this view.
    pub fn m(&self) -> usize {
        self.q_rows.as_ref().map_or(self.q.nrows(), |r| r.len())
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    pub fn meta(&self) -> &SketchMeta {
        &self.meta
    }

    pub fn set_spectral_error(&mut self, err: f64) {
        self.meta.spectral_error = Some(err);
    }

    pub fn is_view(&self) -> bool {
        self.p_rows.is_some() || self.q_rows.is_some()
    }

    fn physical_p(&self, i: usize) -> usize {
        self.p_rows.as_ref().map_or(i, |r| r[i])
    }

    fn physical_q(&self, i: usize) -> usize {
        self.q_rows.as_ref().map_or(i, |r| r[i])
    }

    /// Row `i` of `P` as an owned k-vector.
    pub fn p_row(&self, i: usize) -> Vec64 {
        self.p.row(self.physical_p(i)).transpose()
    }

    /// Row `i` of `Q` as an owned k-vector.
    pub fn q_row(&self, i: usize) -> Vec64 {
        self.q.row(self.physical_q(i)).transpose()
    }

    /// Materialize `P` for this view (`n × k`).
    pub fn p_dense(&self) -> Mat {
        match &self.p_rows {
            None => (*self.p).clone(),
            Some(rows) => gather_rows(&self.p, rows),
        }
    }

    /// Materialize `Q` for this view (`m × k`).
    pub fn q_dense(&self) -> Mat {
        match &self.q_rows {
            None => (*self.q).clone(),
            Some(rows) => gather_rows(&self.q, rows),
        }
    }

    /// `K = Qᵀ Q` over the surviving observation rows, `O(m k²)`.
    pub fn q_gram(&self) -> Mat {
        match &self.q_rows {
            None => self.q.tr_mul(&self.q),
            Some(rows) => {
                let g = gather_rows(&self.q, rows);
                g.tr_mul(&g)
            }
        }
    }

    /// `Qᵀ y` over the surviving observation rows.
    pub fn q_tr_mul(&self, y: &Vec64) -> Result<Vec64> {
        if y.len() != self.m() {
            return Err(Error::dims("q_tr_mul expects one entry per observation"));
        }
        let k = self.rank();
        let mut out = Vec64::zeros(k);
        for i in 0..self.m() {
            let row = self.q.row(self.physical_q(i));
            for c in 0..k {
                out[c] += row[c] * y[i];
            }
        }
        Ok(out)
    }

    /// `P · M` over the surviving feature rows (`n × j`).
    pub fn p_mul(&self, m: &Mat) -> Result<Mat> {
        if m.nrows() != self.rank() {
            return Err(Error::dims("p_mul expects a k-row matrix"));
        }
        Ok(match &self.p_rows {
            None => &*self.p * m,
            Some(rows) => gather_rows(&self.p, rows) * m,
        })
    }

    /// Dense reconstruction `P Qᵀ` of this view. Intended for tests and
    /// small problems; allocates `n × m`.
    pub fn reconstruct(&self) -> Mat {
        self.p_dense() * self.q_dense().transpose()
    }

    /// Original (pre-view) row index of feature `i` in this view.
    pub fn feature_id(&self, i: usize) -> usize {
        self.physical_p(i)
    }

    /// Original (pre-view) row index of observation `i` in this view.
    pub fn observation_id(&self, i: usize) -> usize {
        self.physical_q(i)
    }

    /// Delete the given rows (view indices, strictly increasing) from one side.
    ///
    /// Returns a view sharing the factor storage; nothing is copied beyond
    /// the surviving index list.
    pub fn drop_rows(&self, indices: &[usize], side: Side) -> Result<Sketch> {
        let current = match side {
            Side::Features => self.n(),
            Side::Observations => self.m(),
        };
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(
                    "drop_rows indices must be strictly increasing (duplicates rejected)",
                ));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= current {
                return Err(Error::invalid(format!(
                    "drop_rows index {last} out of range ({current} rows)"
                )));
            }
        }
        if indices.len() == current {
            return Err(Error::invalid("drop_rows would delete every row"));
        }
        if indices.is_empty() {
            return Ok(self.clone());
        }
        let mut kept = Vec::with_capacity(current - indices.len());
        let mut drop_at = 0usize;
        for i in 0..current {
            if drop_at < indices.len() && indices[drop_at] == i {
                drop_at += 1;
                continue;
            }
            kept.push(match side {
                Side::Features => self.physical_p(i),
                Side::Observations => self.physical_q(i),
            });
        }
        let mut out = self.clone();
        match side {
            Side::Features => out.p_rows = Some(Arc::new(kept)),
            Side::Observations => out.q_rows = Some(Arc::new(kept)),
        }
        Ok(out)
    }
}

fn gather_rows(m: &Mat, rows: &[usize]) -> Mat {
    let k = m.ncols();
    let mut out = Mat::zeros(rows.len(), k);
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&m.row(src));
    }
    out
}

fn thin_q(m: Mat) -> Mat {
    m.qr().q()
}

/// Randomized subspace iteration sketch of rank `k`.
///
/// Gaussian test matrix, re-orthonormalization after every pass, an internal
/// oversampling of 5 columns, and the convention `P = U_k Σ_k`, `Q = V_k`
/// so that `Qᵀ Q = I` for canonical (non-view) sketches. Deterministic for a
/// fixed `(X, k, power_iters, seed)`.
pub fn power_sketch<M: MatrixLike + ?Sized>(
    x: &M,
    k: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Sketch> {
    let (n, m) = (x.nrows(), x.ncols());
    if k == 0 {
        return Err(Error::invalid("sketch rank must be at least 1"));
    }
    if k > n.min(m) {
        return Err(Error::invalid(format!(
            "sketch rank {k} exceeds min(m, n) = {}",
            n.min(m)
        )));
    }
    let meta = SketchMeta {
        power_iters,
        seed,
        spectral_error: None,
    };
    if x.frob_sq() == 0.0 {
        // Degenerate input: zero factor on the left, any orthonormal columns
        // on the right.
        let mut q = Mat::zeros(m, k);
        for j in 0..k {
            q[(j, j)] = 1.0;
        }
        let mut sk = Sketch::from_factors(Mat::zeros(n, k), q, meta)?;
        sk.set_spectral_error(0.0);
        return Ok(sk);
    }

    let width = (k + 5).min(n.min(m));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Mat::from_fn(m, width, |_, _| rng.sample(StandardNormal));

    let mut basis = thin_q(x.mul_dense(&omega));
    for _ in 0..power_iters {
        let z = thin_q(x.tr_mul_dense(&basis));
        basis = thin_q(x.mul_dense(&z));
    }

    // B = basisᵀ X is small (width × m); its SVD finishes the job.
    let b = x.tr_mul_dense(&basis).transpose();
    let svd = b.svd(true, true);
    let u_small = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");

    // Columns sorted by descending singular value.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let u_big = &basis * u_small;
    let mut p = Mat::zeros(n, k);
    let mut q = Mat::zeros(m, k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        let sigma = svd.singular_values[src];
        p.set_column(dst, &(u_big.column(src) * sigma));
        q.set_column(dst, &v_t.row(src).transpose());
    }
    Sketch::from_factors(p, q, meta)
}

/// Measure the sketch residual `E = X − P Qᵀ`.
///
/// Returns `(spectral_estimate, frobenius_exact)`. The spectral estimate is a
/// seeded power iteration with `probes` passes on `E`; the Frobenius norm is
/// exact.
pub fn sketch_error<M: MatrixLike + ?Sized>(
    x: &M,
    sk: &Sketch,
    probes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if x.nrows() != sk.n() || x.ncols() != sk.m() {
        return Err(Error::dims(format!(
            "sketch_error: data is {}x{}, sketch is {}x{}",
            x.nrows(),
            x.ncols(),
            sk.n(),
            sk.m()
        )));
    }
    let p = sk.p_dense();
    let q = sk.q_dense();
    let frob = x.residual_frob_sq(&p, &q).max(0.0).sqrt();

    // Power iteration on E via factored products.
    let m = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5153_4b45);
    let mut v = Mat::from_fn(m, 1, |_, _| rng.sample(StandardNormal));
    let nv = v.norm();
    if nv == 0.0 {
        v[(0, 0)] = 1.0;
    } else {
        v /= nv;
    }
    let mut sigma = 0.0;
    for _ in 0..probes.max(1) {
        // u = E v = X v − P (Qᵀ v)
        let u = x.mul_dense(&v) - &p * q.tr_mul(&v);
        let un = u.norm();
        sigma = un;
        if un == 0.0 {
            break;
        }
        // v = Eᵀ u / ‖·‖
        let w = x.tr_mul_dense(&(u.clone() / un)) - &q * p.tr_mul(&(u / un));
        let wn = w.norm();
        if wn == 0.0 {
            sigma = 0.0;
            break;
        }
        v = w / wn;
        sigma = wn;
    }
    Ok((sigma, frob))
}
