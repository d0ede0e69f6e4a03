//! Datasets: a design matrix `X` (features × observations, dense or sparse
//! CSR) plus a response vector, and the synthetic generators used by the
//! benchmark harness and the test suites.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sketch::MatrixLike;
use crate::{Mat, Vec64};

/// Sparse matrix in compressed sparse row format, rows = features.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are rejected.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            if last == Some((r, c)) {
                return Err(Error::invalid(format!("duplicate entry at ({r}, {c})")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at ({r}, {c})")));
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }

    /// Row `i` as a dense vector of length `ncols`.
    pub fn row_dense(&self, i: usize) -> Vec64 {
        let mut out = Vec64::zeros(self.ncols);
        for at in self.row_range(i) {
            out[self.indices[at]] = self.values[at];
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut out = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for at in self.row_range(i) {
                out[(i, self.indices[at])] = self.values[at];
            }
        }
        out
    }
}

impl MatrixLike for CsrMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn mul_dense(&self, b: &Mat) -> Mat {
        let j = b.ncols();
        let mut out = Mat::zeros(self.nrows, j);
        for i in 0..self.nrows {
            for at in self.row_range(i) {
                let (col, v) = (self.indices[at], self.values[at]);
                for c in 0..j {
                    out[(i, c)] += v * b[(col, c)];
                }
            }
        }
        out
    }
    fn tr_mul_dense(&self, b: &Mat) -> Mat {
        let j = b.ncols();
        let mut out = Mat::zeros(self.ncols, j);
        for i in 0..self.nrows {
            for at in self.row_range(i) {
                let (col, v) = (self.indices[at], self.values[at]);
                for c in 0..j {
                    out[(col, c)] += v * b[(i, c)];
                }
            }
        }
        out
    }
    fn frob_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
    fn residual_frob_sq(&self, p: &Mat, q: &Mat) -> f64 {
        // Row-wise: ‖xᵢ − pᵢ Qᵀ‖² with xᵢ sparse.
        let k = p.ncols();
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let mut row = Vec64::zeros(self.ncols);
            for at in self.row_range(i) {
                row[self.indices[at]] = self.values[at];
            }
            for jj in 0..self.ncols {
                let mut approx = 0.0;
                for l in 0..k {
                    approx += p[(i, l)] * q[(jj, l)];
                }
                let d = row[jj] - approx;
                acc += d * d;
            }
        }
        acc
    }
}

/// Design matrix, dense or sparse.
#[derive(Debug, Clone)]
pub enum DataMatrix {
    Dense(Mat),
    Sparse(CsrMatrix),
}

impl From<Mat> for DataMatrix {
    fn from(m: Mat) -> Self {
        DataMatrix::Dense(m)
    }
}

impl MatrixLike for DataMatrix {
    fn nrows(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.nrows(),
            DataMatrix::Sparse(m) => m.nrows,
        }
    }
    fn ncols(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.ncols(),
            DataMatrix::Sparse(m) => m.ncols,
        }
    }
    fn mul_dense(&self, b: &Mat) -> Mat {
        match self {
            DataMatrix::Dense(m) => m * b,
            DataMatrix::Sparse(m) => m.mul_dense(b),
        }
    }
    fn tr_mul_dense(&self, b: &Mat) -> Mat {
        match self {
            DataMatrix::Dense(m) => m.tr_mul(b),
            DataMatrix::Sparse(m) => m.tr_mul_dense(b),
        }
    }
    fn frob_sq(&self) -> f64 {
        match self {
            DataMatrix::Dense(m) => m.norm_squared(),
            DataMatrix::Sparse(m) => m.frob_sq(),
        }
    }
    fn residual_frob_sq(&self, p: &Mat, q: &Mat) -> f64 {
        match self {
            DataMatrix::Dense(m) => MatrixLike::residual_frob_sq(m, p, q),
            DataMatrix::Sparse(m) => m.residual_frob_sq(p, q),
        }
    }
}

impl DataMatrix {
    /// `Xᵀ w`: predictions for every observation.
    pub fn predictions(&self, w: &Vec64) -> Result<Vec64> {
        if w.len() != self.nrows() {
            return Err(Error::dims("predictions: w must have one entry per feature"));
        }
        let b = Mat::from_column_slice(w.len(), 1, w.as_slice());
        Ok(self.tr_mul_dense(&b).column(0).into_owned())
    }

    /// Row `i` of `X` (one feature across all observations).
    pub fn feature_row(&self, i: usize) -> Vec64 {
        match self {
            DataMatrix::Dense(m) => m.row(i).transpose(),
            DataMatrix::Sparse(m) => m.row_dense(i),
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            DataMatrix::Dense(m) => m.clone(),
            DataMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// A learning problem: `X` (n features × m observations) and response `y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DataMatrix,
    pub y: Vec64,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DataMatrix, y: Vec64) -> Result<Self> {
        let ds = Dataset {
            x,
            y,
            feature_names: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.y.len() != self.m() {
            return Err(Error::dims(format!(
                "response has {} entries for {} observations",
                self.y.len(),
                self.m()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("response contains NaN or infinity"));
        }
        if let DataMatrix::Dense(m) = &self.x {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("design matrix contains NaN or infinity"));
            }
        }
        Ok(())
    }

    /// All labels in {−1, +1}?
    pub fn has_binary_labels(&self) -> bool {
        self.y.iter().all(|&v| v == 1.0 || v == -1.0)
    }
}

/// Synthetic dataset generators (all deterministic in the seed).
pub mod synthetic {
    use super::*;

    /// Dense i.i.d. standard normal design and response.
    pub fn iid_gaussian(n: usize, m: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Mat::from_fn(n, m, |_, _| rng.sample(StandardNormal));
        let y = Vec64::from_fn(m, |_, _| rng.sample(StandardNormal));
        Dataset {
            x: DataMatrix::Dense(x),
            y,
            feature_names: None,
        }
    }

    /// Low effective rank design: `X = L Fᵀ + η·E` with `L: n×r`, decaying
    /// factor strengths, plus a planted sparse weight vector generating
    /// labels `sign(Xᵀw* + noise)` with a fraction of labels flipped.
    ///
    /// Returns the dataset and the planted weights.
    pub fn planted_classification(
        n: usize,
        m: usize,
        effective_rank: usize,
        cardinality: usize,
        label_noise: f64,
        seed: u64,
    ) -> (Dataset, Vec64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = effective_rank.max(1);
        let left = Mat::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let factors = Mat::from_fn(r, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = Mat::zeros(n, m);
        // Decaying factor strengths give a realistic fast-falling spectrum.
        for l in 0..r {
            let strength = 1.0 / (1.0 + l as f64 * 0.35);
            for j in 0..m {
                for i in 0..n {
                    x[(i, j)] += strength * left[(i, l)] * factors[(l, j)];
                }
            }
        }
        let eta = 0.05;
        for j in 0..m {
            for i in 0..n {
                x[(i, j)] += eta * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut w_true = Vec64::zeros(n);
        let mut picked = Vec::new();
        while picked.len() < cardinality.min(n) {
            let i = rng.random_range(0..n);
            if !picked.contains(&i) {
                picked.push(i);
                w_true[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
        let margins = x.tr_mul(&w_true);
        let scale = margins.amax().max(1e-12);
        let mut y = Vec64::zeros(m);
        for j in 0..m {
            let noisy = margins[j] / scale + 0.05 * rng.sample::<f64, _>(StandardNormal);
            y[j] = if noisy >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < label_noise {
                y[j] = -y[j];
            }
        }
        (
            Dataset {
                x: DataMatrix::Dense(x),
                y,
                feature_names: None,
            },
            w_true,
        )
    }

    /// Features organized in correlated blocks: all features of a block are
    /// noisy copies of one latent factor. Returns the dataset (response is
    /// the first feature of block 0 plus noise) and the block id per feature.
    pub fn block_correlated(
        n: usize,
        m: usize,
        block_size: usize,
        seed: u64,
    ) -> (Dataset, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block_size = block_size.max(1);
        let blocks = n.div_ceil(block_size);
        let latent = Mat::from_fn(blocks, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = Mat::zeros(n, m);
        let mut block_of = vec![0usize; n];
        for i in 0..n {
            let b = i / block_size;
            block_of[i] = b;
            for j in 0..m {
                x[(i, j)] = latent[(b, j)] + 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut y = Vec64::zeros(m);
        for j in 0..m {
            y[j] = latent[(0, j)] + 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        (
            Dataset {
                x: DataMatrix::Dense(x),
                y,
                feature_names: None,
            },
            block_of,
        )
    }

    /// Near rank-one design with a few strong, equally scaled features;
    /// under a rank-1 sketch the robust model spreads weight across them
    /// while the non-robust one cannot hold more than one.
    pub fn near_rank_one(n: usize, m: usize, strong: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = Vec64::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = Mat::zeros(n, m);
        for i in 0..n {
            let amp = if i < strong { 1.0 } else { 0.15 };
            for j in 0..m {
                x[(i, j)] = amp * profile[j] + 0.02 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let y = &profile * 1.2;
        Dataset {
            x: DataMatrix::Dense(x),
            y,
            feature_names: None,
        }
    }
}
