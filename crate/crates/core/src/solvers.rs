//! Encoding-matrix synthesis: find a sparse `E` with `D E = F`.
//!
//! Three routes are provided:
//!
//! * [`zero_forcing_scheme`]: per column, pick `K` random servers and solve
//!   the resulting square system. At most `K` nonzeros per column, so
//!   `γ ≤ K/N`.
//! * [`l0_min_encode`]: exhaustive minimum-support search per column. Exact
//!   but exponential; only for small `N`.
//! * [`bp_encode`]: basis pursuit (`min ‖z‖₁ s.t. D z = y`) per column, solved
//!   by ADMM, then hard-thresholded and debiased on the detected support.
//!
//! Solving column by column is exact for all three: `vec(F) = (D ⊗ I)·vec(E)`
//! is a row-permuted block diagonal system with one `D` block per column of
//! `E`, so both the ℓ0 and the ℓ1 objectives separate.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    least_squares, matmul, norm0, norm2, support_with_scale, zero_threshold, Lu, Mat, RngSeed,
    DEFAULT_EPS_ZERO,
};
use crate::subsets::Combinations;

/// Number of subset draws zero-forcing makes per column before giving up.
pub const ZF_MAX_ATTEMPTS: usize = 32;

/// Largest acceptable 1-norm condition number of a zero-forcing submatrix.
pub const ZF_MAX_CONDITION: f64 = 1e12;

/// Largest `N` the ℓ0 oracle enumerates without an explicit support cap.
pub const L0_MAX_COLUMNS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Zf,
    L0,
    Bp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Zf => "zf",
            Method::L0 => "l0",
            Method::Bp => "bp",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_zero: f64,
    pub feas_tol: f64,
    pub bp_rho: f64,
    pub bp_max_iter: usize,
    pub bp_tol_abs: f64,
    pub bp_tol_rel: f64,
    pub l0_max_support: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_zero: DEFAULT_EPS_ZERO,
            feas_tol: 1e-9,
            bp_rho: 1.0,
            bp_max_iter: 50_000,
            bp_tol_abs: 1e-10,
            bp_tol_rel: 1e-8,
            l0_max_support: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_zero", self.eps_zero),
            ("feas_tol", self.feas_tol),
            ("bp_rho", self.bp_rho),
            ("bp_tol_abs", self.bp_tol_abs),
            ("bp_tol_rel", self.bp_tol_rel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.bp_max_iter == 0 {
            return Err(Error::Domain("bp_max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Per-column solver statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    /// ADMM iterations (bp) or supports tried (l0); zero for zf.
    pub iterations: usize,
    /// `‖D e_l − f_l‖₂` of the final column.
    pub residual: f64,
    /// Extra subset draws zero-forcing needed.
    pub resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: Method,
    pub eps_zero: f64,
    pub feas_tol: f64,
    /// `max|D E − F|`
    pub max_residual: f64,
    pub columns: Vec<ColumnStats>,
}

/// An encoding matrix together with its cost and assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    #[serde(rename = "E")]
    pub e: Mat,
    pub gamma: f64,
    /// Row supports of `E`: the subfunctions each server computes (0-based).
    pub supports: Vec<Vec<usize>>,
    pub diagnostics: Diagnostics,
}

impl SchemeOutcome {
    /// Package `e`, computing `γ` and supports and checking feasibility.
    pub fn assemble(
        method: Method,
        d: &Mat,
        f: &Mat,
        e: Mat,
        config: &SolverConfig,
        columns: Vec<ColumnStats>,
    ) -> Result<SchemeOutcome> {
        let de = matmul(d, &e)?;
        let max_residual = de.max_abs_diff(f)?;
        let bound = config.feas_tol * (1.0 + f.max_abs());
        if max_residual > bound {
            return Err(Error::FeasibilityViolated {
                residual: max_residual,
                bound,
            });
        }
        let gamma = gamma_of(&e, config.eps_zero);
        let supports = row_supports(&e, config.eps_zero);
        Ok(SchemeOutcome {
            e,
            gamma,
            supports,
            diagnostics: Diagnostics {
                method,
                eps_zero: config.eps_zero,
                feas_tol: config.feas_tol,
                max_residual,
                columns,
            },
        })
    }
}

/// Normalized computation cost `‖E‖₀ / (N L)`.
pub fn gamma_of(e: &Mat, eps_zero: f64) -> f64 {
    norm0(e, eps_zero) as f64 / (e.rows() * e.cols()) as f64
}

/// Support of every row of `e`, thresholded relative to the whole matrix so
/// that the sizes add up to `norm0(e)`.
pub fn row_supports(e: &Mat, eps_zero: f64) -> Vec<Vec<usize>> {
    let scale = e.max_abs();
    (0..e.rows())
        .map(|n| support_with_scale(e.row(n), eps_zero, scale))
        .collect()
}

fn check_shapes(d: &Mat, f: &Mat) -> Result<()> {
    if d.rows() != f.rows() {
        return Err(Error::DimensionMismatch(format!(
            "D is {}x{} but F has {} rows",
            d.rows(),
            d.cols(),
            f.rows()
        )));
    }
    Ok(())
}

fn column_residual(d: &Mat, x: &[f64], y: &[f64]) -> f64 {
    let dx = d.mul_vec(x).expect("conformable");
    norm2(&dx.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Zero-forcing: for each column, draw a uniformly random `K`-subset of
/// servers and solve the square system on it.
///
/// Subsets whose submatrix is singular, has a 1-norm condition number above
/// [`ZF_MAX_CONDITION`], or fails the feasibility bound are redrawn, up to
/// [`ZF_MAX_ATTEMPTS`] draws per column.
pub fn zero_forcing_scheme(
    d: &Mat,
    f: &Mat,
    seed: RngSeed,
    config: &SolverConfig,
) -> Result<SchemeOutcome> {
    config.validate()?;
    check_shapes(d, f)?;
    let (k, n) = (d.rows(), d.cols());
    if k > n {
        return Err(Error::Domain(format!(
            "zero-forcing needs K <= N, got K={k}, N={n}"
        )));
    }
    let bound = config.feas_tol * (1.0 + f.max_abs());
    let mut rng = seed.rng();
    let mut e = Mat::zeros(n, f.cols());
    let mut stats = Vec::with_capacity(f.cols());
    for l in 0..f.cols() {
        let y = f.col(l);
        let mut solved = None;
        for attempt in 0..ZF_MAX_ATTEMPTS {
            let mut subset = index::sample(&mut rng, n, k).into_vec();
            subset.sort_unstable();
            let sub = d.select_columns(&subset)?;
            let lu = match Lu::factor(&sub) {
                Ok(lu) => lu,
                Err(Error::SingularMatrix { .. }) => continue,
                Err(other) => return Err(other),
            };
            if lu.condition_1norm(&sub) > ZF_MAX_CONDITION {
                continue;
            }
            let coeffs = lu.solve(&y)?;
            let worst = sub
                .mul_vec(&coeffs)?
                .iter()
                .zip(&y)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if worst > bound {
                continue;
            }
            solved = Some((subset, coeffs, attempt));
            break;
        }
        let (subset, coeffs, resamples) = solved.ok_or(Error::ResampleExhausted {
            column: l,
            attempts: ZF_MAX_ATTEMPTS,
        })?;
        let mut column = vec![0.0; n];
        for (&s, &c) in subset.iter().zip(&coeffs) {
            column[s] = c;
        }
        stats.push(ColumnStats {
            iterations: 0,
            residual: column_residual(d, &column, &y),
            resamples,
        });
        e.set_col(l, &column);
    }
    SchemeOutcome::assemble(Method::Zf, d, f, e, config, stats)
}

/// Minimum-cardinality support reproducing one column.
#[derive(Clone, Debug, PartialEq)]
pub struct L0Column {
    pub support: Vec<usize>,
    pub coeffs: Vec<f64>,
    /// Candidate supports examined, the empty one included.
    pub subsets_tried: usize,
}

impl L0Column {
    /// Expand to a dense length-`n` vector.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&s, &c) in self.support.iter().zip(&self.coeffs) {
            out[s] = c;
        }
        out
    }
}

/// Exhaustive ℓ0 search: sizes 0, 1, 2, … and, within a size, subsets in
/// lexicographic order; the first support whose least-squares residual is at
/// most `feas_tol·(1+‖y‖₂)` wins.
pub fn l0_column_oracle(d: &Mat, y: &[f64], config: &SolverConfig) -> Result<L0Column> {
    config.validate()?;
    let n = d.cols();
    if y.len() != d.rows() {
        return Err(Error::DimensionMismatch(format!(
            "target of length {} for {} rows",
            y.len(),
            d.rows()
        )));
    }
    if config.l0_max_support.is_none() && n > L0_MAX_COLUMNS {
        return Err(Error::TooLarge(format!(
            "l0 enumeration over N={n} > {L0_MAX_COLUMNS} columns needs l0_max_support"
        )));
    }
    let max_support = config.l0_max_support.unwrap_or(n).min(n);
    let bound = config.feas_tol * (1.0 + norm2(y));
    let mut tried = 1;
    if norm2(y) <= bound {
        return Ok(L0Column {
            support: Vec::new(),
            coeffs: Vec::new(),
            subsets_tried: tried,
        });
    }
    for s in 1..=max_support {
        for subset in Combinations::new(n, s) {
            tried += 1;
            let sub = d.select_columns(&subset)?;
            let ls = least_squares(&sub, y)?;
            if ls.residual <= bound {
                return Ok(L0Column {
                    support: subset,
                    coeffs: ls.x,
                    subsets_tried: tried,
                });
            }
        }
    }
    Err(Error::Infeasible {
        column: None,
        max_support,
    })
}

/// Column-wise ℓ0 minimization; the minimum achievable `γ` for this `D`.
pub fn l0_min_encode(d: &Mat, f: &Mat, config: &SolverConfig) -> Result<SchemeOutcome> {
    check_shapes(d, f)?;
    let n = d.cols();
    let columns: Vec<(Vec<f64>, ColumnStats)> = (0..f.cols())
        .into_par_iter()
        .map(|l| {
            let y = f.col(l);
            let sol = l0_column_oracle(d, &y, config).map_err(|e| e.at_column(l))?;
            let dense = sol.dense(n);
            let residual = column_residual(d, &dense, &y);
            Ok((
                dense,
                ColumnStats {
                    iterations: sol.subsets_tried,
                    residual,
                    resamples: 0,
                },
            ))
        })
        .collect::<Result<_>>()?;
    assemble_columns(Method::L0, d, f, columns, config)
}

fn assemble_columns(
    method: Method,
    d: &Mat,
    f: &Mat,
    columns: Vec<(Vec<f64>, ColumnStats)>,
    config: &SolverConfig,
) -> Result<SchemeOutcome> {
    let mut e = Mat::zeros(d.cols(), f.cols());
    let mut stats = Vec::with_capacity(columns.len());
    for (l, (col, st)) in columns.into_iter().enumerate() {
        e.set_col(l, &col);
        stats.push(st);
    }
    SchemeOutcome::assemble(method, d, f, e, config, stats)
}

/// Result of one basis-pursuit solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BpColumn {
    pub z: Vec<f64>,
    pub iterations: usize,
    /// `‖D z − y‖₂` after debiasing.
    pub residual: f64,
}

/// Basis-pursuit solver bound to one `D`; the Cholesky factor of `D Dᵀ` is
/// computed once and shared by every column.
#[derive(Clone, Debug)]
pub struct BasisPursuit<'a> {
    d: &'a Mat,
    chol: Vec<f64>,
}

impl<'a> BasisPursuit<'a> {
    pub fn new(d: &'a Mat) -> Result<Self> {
        let k = d.rows();
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = d.row(i).iter().zip(d.row(j)).map(|(a, b)| a * b).sum();
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let max_diag = (0..k).map(|i| g[i * k + i]).fold(0.0_f64, f64::max);
        let chol = cholesky(g, k, 1e-12 * max_diag).ok_or(Error::RankDeficient)?;
        Ok(BasisPursuit { d, chol })
    }

    /// `v − Dᵀ (D Dᵀ)⁻¹ (D v − y)`
    fn project(&self, v: &[f64], y: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self
            .d
            .mul_vec(v)
            .expect("conformable")
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .collect();
        let w = cholesky_solve(&self.chol, self.d.rows(), &r);
        let corr = self.d.tr_mul_vec(&w).expect("conformable");
        v.iter().zip(&corr).map(|(a, b)| a - b).collect()
    }

    /// ADMM on `min ‖z‖₁ + ι{Dx = y}(x)` subject to `x = z`.
    ///
    /// Iterates `x ← Π(z − u)`, `z ← shrink(x + u, 1/ρ)`, `u ← u + x − z`
    /// until both the primal gap `‖x − z‖₂` and the dual step `ρ‖z − z_prev‖₂`
    /// fall below `tol_abs·√N + tol_rel·max(‖x‖₂, ‖z‖₂)`. The converged `z` is
    /// thresholded with `eps_zero` and re-solved by least squares on its
    /// support; the result is accepted when `‖D z − y‖₂ ≤ feas_tol·(1+‖y‖₂)`,
    /// otherwise iteration continues.
    pub fn solve(&self, y: &[f64], config: &SolverConfig) -> Result<BpColumn> {
        config.validate()?;
        let (k, n) = (self.d.rows(), self.d.cols());
        if y.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "target of length {} for {k} rows",
                y.len()
            )));
        }
        let feas_bound = config.feas_tol * (1.0 + norm2(y));
        if norm2(y) == 0.0 {
            return Ok(BpColumn {
                z: vec![0.0; n],
                iterations: 0,
                residual: 0.0,
            });
        }
        let shrink = 1.0 / config.bp_rho;
        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        let sqrt_n = (n as f64).sqrt();
        for it in 1..=config.bp_max_iter {
            let v: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a - b).collect();
            let x = self.project(&v, y);
            let z_prev = std::mem::take(&mut z);
            z = x
                .iter()
                .zip(&u)
                .map(|(a, b)| soft_threshold(a + b, shrink))
                .collect();
            for ((ui, xi), zi) in u.iter_mut().zip(&x).zip(&z) {
                *ui += xi - zi;
            }
            let primal = norm2(&x.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
            let dual = config.bp_rho
                * norm2(
                    &z.iter()
                        .zip(&z_prev)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
            let eps = config.bp_tol_abs * sqrt_n + config.bp_tol_rel * norm2(&x).max(norm2(&z));
            if primal <= eps && dual <= eps {
                if let Some((zd, residual)) = self.debias(&z, y, config, feas_bound)? {
                    return Ok(BpColumn {
                        z: zd,
                        iterations: it,
                        residual,
                    });
                }
            }
        }
        Err(Error::NoConvergence {
            column: None,
            iterations: config.bp_max_iter,
            best: self.project(&z, y),
        })
    }

    fn debias(
        &self,
        z: &[f64],
        y: &[f64],
        config: &SolverConfig,
        feas_bound: f64,
    ) -> Result<Option<(Vec<f64>, f64)>> {
        let scale = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let support = support_with_scale(z, config.eps_zero, scale);
        let n = self.d.cols();
        let mut out = vec![0.0; n];
        if !support.is_empty() {
            let sub = self.d.select_columns(&support)?;
            let ls = least_squares(&sub, y)?;
            for (&s, &c) in support.iter().zip(&ls.x) {
                out[s] = c;
            }
        }
        // drop debiased entries that landed under the threshold
        let thr = zero_threshold(
            config.eps_zero,
            out.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        );
        out.iter_mut()
            .filter(|v| v.abs() <= thr)
            .for_each(|v| *v = 0.0);
        let residual = column_residual(self.d, &out, y);
        Ok((residual <= feas_bound).then_some((out, residual)))
    }
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Lower-triangular Cholesky factor of a row-major SPD matrix, or `None` if a
/// pivot falls to `min_pivot` or below.
fn cholesky(mut a: Vec<f64>, n: usize, min_pivot: f64) -> Option<Vec<f64>> {
    for j in 0..n {
        let s: f64 = (0..j).map(|k| a[j * n + k] * a[j * n + k]).sum();
        let diag = a[j * n + j] - s;
        if diag.is_nan() || diag <= min_pivot {
            return None;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| a[i * n + k] * a[j * n + k]).sum();
            a[i * n + j] = (a[i * n + j] - s) / ljj;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let s: f64 = (0..i).map(|j| l[i * n + j] * x[j]).sum();
        x[i] = (x[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| l[j * n + i] * x[j]).sum();
        x[i] = (x[i] - s) / l[i * n + i];
    }
    x
}

/// Basis pursuit on a single column.
pub fn basis_pursuit_column(d: &Mat, y: &[f64], config: &SolverConfig) -> Result<BpColumn> {
    BasisPursuit::new(d)?.solve(y, config)
}

/// Column-wise basis pursuit with one shared factorization.
pub fn bp_encode(d: &Mat, f: &Mat, config: &SolverConfig) -> Result<SchemeOutcome> {
    config.validate()?;
    check_shapes(d, f)?;
    let bp = BasisPursuit::new(d)?;
    let columns: Vec<(Vec<f64>, ColumnStats)> = (0..f.cols())
        .into_par_iter()
        .map(|l| {
            let sol = bp.solve(&f.col(l), config).map_err(|e| e.at_column(l))?;
            Ok((
                sol.z,
                ColumnStats {
                    iterations: sol.iterations,
                    residual: sol.residual,
                    resamples: 0,
                },
            ))
        })
        .collect::<Result<_>>()?;
    assemble_columns(Method::Bp, d, f, columns, config)
}

/// Dispatch by [`Method`]. `seed` only matters for zero-forcing.
pub fn solve(
    method: Method,
    d: &Mat,
    f: &Mat,
    seed: RngSeed,
    config: &SolverConfig,
) -> Result<SchemeOutcome> {
    match method {
        Method::Zf => zero_forcing_scheme(d, f, seed, config),
        Method::L0 => l0_min_encode(d, f, config),
        Method::Bp => bp_encode(d, f, config),
    }
}
