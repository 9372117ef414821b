//! Dense real matrices and the small amount of linear algebra the rest of the
//! crate needs: products, LU and Householder-QR solves, spectral norms,
//! symmetric eigenvalues, row-stacking vectorization and Kronecker products.
//!
//! Everything is row-major `f64`. Random ensembles are driven by an explicit
//! [`RngSeed`] so that identical `(dims, seed)` always give bit-identical
//! matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative zero threshold for support detection.
pub const DEFAULT_EPS_ZERO: f64 = 1e-8;

/// Relative pivot threshold below which [`solve_square`] reports singularity.
pub const SINGULAR_PIVOT_REL: f64 = 1e-12;

const POWER_ITER_CAP: usize = 10_000;

/// Seed for every random generator in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Deterministically derive an independent sub-seed from `self` and a
    /// list of indices (SplitMix64 finalizer folded over the inputs).
    pub fn derive(self, parts: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.0 ^ 0x6a09_e667_f3bc_c908);
        for &p in parts {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        RngSeed(h)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dense row-major real matrix with at least one row and one column and
/// finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatRepr", into = "MatRepr")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatRepr> for Mat {
    type Error = Error;

    fn try_from(r: MatRepr) -> Result<Self> {
        Mat::new(r.rows, r.cols, r.data)
    }
}

impl From<Mat> for MatRepr {
    fn from(m: Mat) -> Self {
        MatRepr {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Build from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Mat::new(r, c, data).expect("valid literal matrix")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "dimensions must be positive");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Column vector (n x 1).
    pub fn column_vector(values: &[f64]) -> Result<Self> {
        Mat::new(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    /// Submatrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Mat> {
        if cols.is_empty() {
            return Err(Error::InvalidMatrix("empty column selection".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (k, &c) in cols.iter().enumerate() {
                out.data[i * cols.len() + k] = self.get(i, c);
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest entrywise absolute difference; dimensions must match.
    pub fn max_abs_diff(&self, other: &Mat) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `self^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "({}x{})^T times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// I.i.d. standard normal entries, filled row by row.
///
/// Samples come from a ChaCha8 stream seeded with `seed`, transformed by the
/// ziggurat sampler of `rand_distr::StandardNormal`.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: RngSeed) -> Mat {
    let mut rng = seed.rng();
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Mat::new(rows, cols, data).expect("positive dimensions")
}

/// I.i.d. equiprobable ±1 entries, filled row by row.
pub fn rademacher_matrix(rows: usize, cols: usize, seed: RngSeed) -> Mat {
    let mut rng = seed.rng();
    let data = (0..rows * cols)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    Mat::new(rows, cols, data).expect("positive dimensions")
}

/// Random ensembles available for `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gaussian,
    Rademacher,
}

impl Ensemble {
    pub fn sample(self, rows: usize, cols: usize, seed: RngSeed) -> Mat {
        match self {
            Ensemble::Gaussian => gaussian_matrix(rows, cols, seed),
            Ensemble::Rademacher => rademacher_matrix(rows, cols, seed),
        }
    }
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "rademacher" => Ok(Ensemble::Rademacher),
            other => Err(Error::Domain(format!("unknown ensemble '{other}'"))),
        }
    }
}

pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// LU factorization with partial (row) pivoting.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Fails with [`Error::SingularMatrix`] when a pivot magnitude drops below
    /// `SINGULAR_PIVOT_REL` times the largest initial entry magnitude.
    pub fn factor(a: &Mat) -> Result<Lu> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let threshold = SINGULAR_PIVOT_REL * a.max_abs();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix {
                    step: k,
                    pivot,
                    threshold,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let inv = 1.0 / lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] * inv;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side of length {} for {n}x{n} system",
                y.len()
            )));
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| y[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// 1-norm condition number, computed from the explicit inverse.
    pub fn condition_1norm(&self, a: &Mat) -> f64 {
        let n = self.n;
        let mut inv_norm = 0.0_f64;
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("square");
            inv_norm = inv_norm.max(norm1(&col));
        }
        let a_norm = (0..a.cols)
            .map(|j| (0..a.rows).map(|i| a.get(i, j).abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        a_norm * inv_norm
    }
}

/// Solve the square system `A x = y` by row-pivoted LU elimination.
pub fn solve_square(a: &Mat, y: &[f64]) -> Result<Vec<f64>> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch(format!(
            "solve_square needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if y.len() != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for {} rows",
            y.len(),
            a.rows
        )));
    }
    Lu::factor(a)?.solve(y)
}

/// Output of [`least_squares`].
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    /// `‖A x − y‖₂`
    pub residual: f64,
    /// Numerical rank detected by the pivoted QR.
    pub rank: usize,
}

/// Minimize `‖A x − y‖₂` with Householder QR and column pivoting.
///
/// Rank-deficient systems get a basic solution (zeros on the columns the
/// pivoting drops). The residual is always recomputed from the original `A`.
pub fn least_squares(a: &Mat, y: &[f64]) -> Result<LeastSquares> {
    let (m, n) = (a.rows, a.cols);
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for {m} rows",
            y.len()
        )));
    }
    let mut r = a.data.clone();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut rank = 0;
    let mut r00 = 0.0;
    for k in 0..steps {
        // pivot column with the largest remaining norm
        let (p, best) = (k..n)
            .map(|j| (j, (k..m).map(|i| r[i * n + j].powi(2)).sum::<f64>()))
            .fold((k, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        let col_norm = best.sqrt();
        if k == 0 {
            r00 = col_norm;
        }
        if col_norm == 0.0 || col_norm <= 1e-12 * r00 {
            break;
        }
        if p != k {
            for i in 0..m {
                r.swap(i * n + k, i * n + p);
            }
            perm.swap(k, p);
        }
        let akk = r[k * n + k];
        let alpha = if akk >= 0.0 { -col_norm } else { col_norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i * n + k]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            for j in k + 1..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[i * n + j]).sum();
                let f = 2.0 * s / vtv;
                for i in k..m {
                    r[i * n + j] -= f * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * qty[i]).sum();
            let f = 2.0 * s / vtv;
            for i in k..m {
                qty[i] -= f * v[i - k];
            }
        }
        r[k * n + k] = alpha;
        for i in k + 1..m {
            r[i * n + k] = 0.0;
        }
        rank = k + 1;
    }
    let mut xp = vec![0.0; n];
    for i in (0..rank).rev() {
        let s: f64 = (i + 1..rank).map(|j| r[i * n + j] * xp[j]).sum();
        xp[i] = (qty[i] - s) / r[i * n + i];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = xp[k];
    }
    let ax = a.mul_vec(&x)?;
    let residual = norm2(&ax.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>());
    Ok(LeastSquares { x, residual, rank })
}

/// Power-iteration estimate of the largest singular value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the relative change fell
    /// under the requested tolerance.
    pub converged: bool,
}

/// Largest singular value of `a` within relative tolerance `tol`.
pub fn spectral_norm(a: &Mat, tol: f64) -> f64 {
    spectral_norm_report(a, tol).value
}

/// Power iteration on `AᵀA` from a fixed, non-symmetric start vector.
pub fn spectral_norm_report(a: &Mat, tol: f64) -> SpectralNorm {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = a.cols;
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sqrt())
        .collect();
    normalize(&mut v);
    let mut est = 0.0;
    for it in 1..=POWER_ITER_CAP {
        let u = a.mul_vec(&v).expect("conformable");
        let sigma = norm2(&u);
        let mut w = a.tr_mul_vec(&u).expect("conformable");
        if norm2(&w) == 0.0 {
            return SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            };
        }
        normalize(&mut w);
        v = w;
        if it > 1 && (sigma - est).abs() <= tol * sigma {
            return SpectralNorm {
                value: sigma.max(est),
                iterations: it,
                converged: true,
            };
        }
        est = sigma.max(est);
    }
    SpectralNorm {
        value: est,
        iterations: POWER_ITER_CAP,
        converged: false,
    }
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut m = a.data.clone();
    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * frob || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Stack the rows of `a` into one vector.
pub fn vec_row(a: &Mat) -> Vec<f64> {
    a.data.clone()
}

/// Standard Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = Mat::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            for p in 0..b.rows {
                for q in 0..b.cols {
                    out.data[(i * b.rows + p) * cols + j * b.cols + q] = aij * b.get(p, q);
                }
            }
        }
    }
    out
}

/// Absolute cut-off implied by a relative `eps_zero` for values whose largest
/// magnitude is `scale`.
#[inline]
pub fn zero_threshold(eps_zero: f64, scale: f64) -> f64 {
    eps_zero * scale.max(1.0)
}

/// Number of entries with `|a_ij| > eps_zero · max(1, max|a|)`.
pub fn norm0(a: &Mat, eps_zero: f64) -> usize {
    let thr = zero_threshold(eps_zero, a.max_abs());
    a.data.iter().filter(|v| v.abs() > thr).count()
}

/// Indices of `values` above the relative threshold computed from `scale`.
pub fn support_with_scale(values: &[f64], eps_zero: f64, scale: f64) -> Vec<usize> {
    let thr = zero_threshold(eps_zero, scale);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > thr)
        .map(|(i, _)| i)
        .collect()
}

pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
