//! Exhaustive restricted isometry constants.
//!
//! `δ_s(A) = max_{|S| ≤ s} ‖A_Sᵀ A_S − I‖₂→₂`, the unsquared operator norm.
//! `δ_{2s}(A) < 1/3` certifies that basis pursuit recovers every `s`-sparse
//! vector exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, kron, symmetric_eigenvalues, Mat};
use crate::subsets::{binomial, Combinations};

/// Largest `C(cols, s)` the enumeration accepts.
pub const MAX_SUBSETS: u128 = 1_000_000;

/// Tolerance used when comparing the two sides of the Kronecker inequality.
pub const KRON_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub s: usize,
    pub delta_s: f64,
    /// `delta_s < 1/3`: certifies recovery of `⌊s/2⌋`-sparse vectors.
    pub certified: bool,
    /// Nonempty subsets examined: `Σ_{1≤j≤s} C(cols, j)`.
    pub subsets_evaluated: u128,
    /// First subset (lexicographic within increasing size) attaining `delta_s`.
    pub argmax_subset: Vec<usize>,
}

/// Spectral extent `max |λ(A_Sᵀ A_S − I)|` of one column subset.
pub fn gram_deviation(a: &Mat, subset: &[usize]) -> f64 {
    let cols: Vec<Vec<f64>> = subset.iter().map(|&j| a.col(j)).collect();
    match cols.len() {
        0 => 0.0,
        1 => (dot(&cols[0], &cols[0]) - 1.0).abs(),
        2 => {
            let p = dot(&cols[0], &cols[0]) - 1.0;
            let q = dot(&cols[1], &cols[1]) - 1.0;
            let b = dot(&cols[0], &cols[1]);
            let mid = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + b * b).sqrt();
            (mid + rad).abs().max((mid - rad).abs())
        }
        k => {
            let mut g = Mat::zeros(k, k);
            for i in 0..k {
                for j in 0..=i {
                    let v = dot(&cols[i], &cols[j]) - if i == j { 1.0 } else { 0.0 };
                    g.set(i, j, v);
                    g.set(j, i, v);
                }
            }
            let ev = symmetric_eigenvalues(&g).expect("square");
            ev[0].abs().max(ev[k - 1].abs())
        }
    }
}

fn check_enumeration(cols: usize, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Domain("sparsity level s must be positive".into()));
    }
    if s > cols {
        return Err(Error::Domain(format!(
            "s = {s} exceeds the {cols} available columns"
        )));
    }
    let count = binomial(cols, s);
    if count > MAX_SUBSETS {
        return Err(Error::TooLarge(format!(
            "C({cols}, {s}) = {count} subsets exceeds {MAX_SUBSETS}"
        )));
    }
    Ok(())
}

/// `δ_s(A)` by enumerating every column subset of size `1..=s`.
pub fn rip_constant(a: &Mat, s: usize) -> Result<RipReport> {
    check_enumeration(a.cols(), s)?;
    let mut best = 0.0_f64;
    let mut argmax = Vec::new();
    let mut evaluated: u128 = 0;
    for size in 1..=s {
        for subset in Combinations::new(a.cols(), size) {
            evaluated += 1;
            let dev = gram_deviation(a, &subset);
            if dev > best || argmax.is_empty() {
                best = dev;
                argmax = subset;
            }
        }
    }
    Ok(RipReport {
        s,
        delta_s: best,
        certified: best < 1.0 / 3.0,
        subsets_evaluated: evaluated,
        argmax_subset: argmax,
    })
}

/// `δ_{2s}(A) < 1/3`.
pub fn rip_certificate(a: &Mat, s: usize) -> Result<bool> {
    Ok(rip_constant(a, 2 * s)?.certified)
}

/// Both sides of `δ_s(D ⊗ I_L) ≤ δ_s(D)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KronRipCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn kron_rip_check(d: &Mat, l: usize, s: usize) -> Result<KronRipCheck> {
    if l == 0 {
        return Err(Error::Domain("L must be positive".into()));
    }
    check_enumeration(d.cols() * l, s)?;
    let lifted = kron(d, &Mat::identity(l));
    let lhs = rip_constant(&lifted, s)?.delta_s;
    let rhs = rip_constant(d, s)?.delta_s;
    Ok(KronRipCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + KRON_SLACK,
    })
}

/// `A / √rows`, the normalization under which random ensembles have
/// unit expected column norm. Not idempotent.
pub fn scale_for_rip(a: &Mat) -> Mat {
    a.scaled(1.0 / (a.rows() as f64).sqrt())
}
