//! Closed-form sparsity thresholds for basis-pursuit recoverability.
//!
//! With `D` drawn i.i.d. from a sub-Gaussian law with tail constants
//! `(β, κ)`, i.e. `P(|X| ≥ t) ≤ β·exp(−κ t²)`, exact ℓ1 recovery of `E`
//! is guaranteed (with high probability) when
//!
//! ```text
//!     K/N ≥ r·γ·ln(e / (2 r γ)),      r = 12 (4β + 2κ) / κ²
//! ```
//!
//! The left side of the inequality in `γ` increases on `(0, 1/(2r)]` up to
//! `1/2`, so the largest admissible cost is
//! `γ* = −(K/N) / (r · W₋₁(−2 (K/N) / e))` for `K/N ≤ 1/2`, where `W₋₁` is
//! the lower real branch of the Lambert function. [`gamma_threshold_bisect`]
//! inverts the inequality directly and is the reference for
//! [`gamma_threshold_closed`].

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Ensemble;

const INV_E: f64 = 1.0 / E;
const LAMBERT_MAX_ITER: usize = 100;

/// Tail constants of a sub-Gaussian entry distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubGaussianParams {
    pub beta: f64,
    pub kappa: f64,
}

impl SubGaussianParams {
    /// Standard normal: `P(|X| ≥ t) = erfc(t/√2) ≤ exp(−t²/2)`.
    pub const STANDARD_NORMAL: SubGaussianParams = SubGaussianParams {
        beta: 1.0,
        kappa: 0.5,
    };

    /// Rademacher: `P(|X| ≥ t) = 1` for `t ≤ 1` and `0` beyond, which
    /// `e·exp(−t²)` dominates.
    pub const RADEMACHER: SubGaussianParams = SubGaussianParams {
        beta: E,
        kappa: 1.0,
    };

    pub fn new(beta: f64, kappa: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite() && kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!(
                "sub-Gaussian parameters must be positive, got beta={beta}, kappa={kappa}"
            )));
        }
        Ok(SubGaussianParams { beta, kappa })
    }

    pub fn preset(ensemble: Ensemble) -> Self {
        match ensemble {
            Ensemble::Gaussian => Self::STANDARD_NORMAL,
            Ensemble::Rademacher => Self::RADEMACHER,
        }
    }

    /// `β·exp(−κ t²)`
    pub fn tail_bound(&self, t: f64) -> f64 {
        self.beta * (-self.kappa * t * t).exp()
    }
}

/// Largest excess of the empirical tail `P̂(|X| ≥ t)` over the declared bound
/// across `t_grid`. Nonpositive means the bound held on the sample.
pub fn tail_bound_excess(samples: &[f64], params: &SubGaussianParams, t_grid: &[f64]) -> f64 {
    let n = samples.len() as f64;
    t_grid
        .iter()
        .map(|&t| {
            let hits = samples.iter().filter(|x| x.abs() >= t).count() as f64;
            hits / n - params.tail_bound(t)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lower real branch `W₋₁(x)` of the Lambert function, `x ∈ [−1/e, 0)`.
///
/// Starts from the branch-point series near `−1/e` and from the asymptotic
/// expansion `ln(−x) − ln(−ln(−x))` elsewhere, refines with Halley steps, and
/// falls back to bisection on `[−745, −1]` if the defining-equation residual
/// is still above `1e-12·|x|`.
pub fn lambert_w_minus1(x: f64) -> Result<f64> {
    if !x.is_finite() || x >= 0.0 {
        return Err(Error::Domain(format!("W_-1 needs x in [-1/e, 0), got {x}")));
    }
    let gap = x + INV_E;
    if gap < 0.0 {
        // tolerate rounding of callers' -1/e
        if gap >= -4.0 * f64::EPSILON * INV_E {
            return Ok(-1.0);
        }
        return Err(Error::Domain(format!("W_-1 needs x in [-1/e, 0), got {x}")));
    }
    if gap == 0.0 {
        return Ok(-1.0);
    }

    let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    let mut w = if p < 0.6 {
        -1.0 - p - p * p / 3.0 - 11.0 * p * p * p / 72.0
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).min(-1.0);
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * w.abs();
        w = next;
        if done {
            break;
        }
    }
    if (w * w.exp() - x).abs() <= 1e-12 * x.abs() && w <= -1.0 {
        return Ok(w);
    }
    Ok(lambert_bisect(x))
}

fn lambert_bisect(x: f64) -> f64 {
    // w e^w decreases on (-inf, -1]
    let (mut lo, mut hi) = (-745.0_f64, -1.0_f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mid * mid.exp() - x > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rl = (lo * lo.exp() - x).abs();
    let rh = (hi * hi.exp() - x).abs();
    if rl < rh {
        lo
    } else {
        hi
    }
}

/// `r = 12 (4β + 2κ) / κ²`
pub fn r_param(p: &SubGaussianParams) -> f64 {
    12.0 * (4.0 * p.beta + 2.0 * p.kappa) / (p.kappa * p.kappa)
}

/// `c = 2 (4β + 2κ) / (3κ²)`; `r = 18 c`.
pub fn c_param(p: &SubGaussianParams) -> f64 {
    2.0 * (4.0 * p.beta + 2.0 * p.kappa) / (3.0 * p.kappa * p.kappa)
}

/// Measurements sufficient for `δ_{2s}(A/√m) ≤ δ` on an `m × p` sub-Gaussian
/// matrix: `2 c δ⁻² s ln(e p / (2 s))`.
pub fn measurement_bound(
    s: usize,
    p: usize,
    params: &SubGaussianParams,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if s == 0 || s > p {
        return Err(Error::Domain(format!("need 1 <= s <= p, got s={s}, p={p}")));
    }
    let arg = E * p as f64 / (2.0 * s as f64);
    if arg <= 1.0 {
        return Err(Error::Domain(format!(
            "ln(e p / 2s) is nonpositive for s={s}, p={p}"
        )));
    }
    Ok(2.0 * c_param(params) / (delta * delta) * s as f64 * arg.ln())
}

/// `r γ ln(e / (2 r γ))`, the measurement-rate requirement at cost `γ`.
pub fn required_kn_ratio(gamma: f64, r: f64) -> f64 {
    r * gamma * (1.0 - (2.0 * r * gamma).ln())
}

fn check_threshold_args(kn_ratio: f64, r: f64) -> Result<()> {
    if !(kn_ratio > 0.0 && kn_ratio.is_finite() && r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!(
            "need kn_ratio > 0 and r > 0, got kn_ratio={kn_ratio}, r={r}"
        )));
    }
    Ok(())
}

/// Whether the sparsity condition constrains `γ` at all. The requirement
/// never exceeds `1/2`, so for `K/N > 1/2` every `γ` qualifies.
pub fn threshold_is_binding(kn_ratio: f64) -> bool {
    kn_ratio <= 0.5
}

/// Largest `γ ∈ (0, 1/(2r)]` with `required_kn_ratio(γ, r) ≤ kn_ratio`, by
/// bisection. Returns `1` when the condition is non-binding, and caps at `1`.
pub fn gamma_threshold_bisect(kn_ratio: f64, r: f64) -> Result<f64> {
    check_threshold_args(kn_ratio, r)?;
    let peak = 1.0 / (2.0 * r);
    if !threshold_is_binding(kn_ratio) {
        return Ok(1.0);
    }
    if kn_ratio == 0.5 {
        return Ok(peak.min(1.0));
    }
    let (mut lo, mut hi) = (0.0_f64, peak);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if required_kn_ratio(mid, r) <= kn_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.min(1.0))
}

/// `γ* = −(K/N) / (r · W₋₁(−2 (K/N) / e))` for `0 < K/N ≤ 1/2`.
pub fn gamma_threshold_closed(kn_ratio: f64, r: f64) -> Result<f64> {
    check_threshold_args(kn_ratio, r)?;
    if kn_ratio > 0.5 {
        return Err(Error::Domain(format!(
            "closed form needs kn_ratio <= 1/2, got {kn_ratio}"
        )));
    }
    let w = lambert_w_minus1(-2.0 * kn_ratio / E)?;
    Ok((-kn_ratio / (r * w)).min(1.0))
}

/// `K L ≥ r ‖E‖₀ ln(e N L / (2 r ‖E‖₀))`, evaluated literally; vacuously true
/// for `‖E‖₀ = 0`.
pub fn kl_condition(k: usize, n: usize, l: usize, e0_count: usize, r: f64) -> bool {
    if e0_count == 0 {
        return true;
    }
    let e0 = e0_count as f64;
    let nl = (n * l) as f64;
    let rhs = r * e0 * (E * nl / (2.0 * r * e0)).ln();
    (k * l) as f64 >= rhs
}

/// `1 − 2 exp(−K L / r)`, unclamped.
pub fn success_prob_bound(k: usize, l: usize, r: f64) -> f64 {
    1.0 - 2.0 * (-((k * l) as f64) / r).exp()
}

/// A probability lower bound that says nothing.
pub fn is_vacuous(prob_lower: f64) -> bool {
    prob_lower <= 0.0
}

fn check_q(q: u64) -> Result<f64> {
    if q < 2 {
        return Err(Error::Domain(format!(
            "alphabet size q must be >= 2, got {q}"
        )));
    }
    Ok(q as f64)
}

/// q-ary entropy `x log_q(q−1) − x log_q x − (1−x) log_q(1−x)` on
/// `0 < x < 1 − 1/q`.
pub fn q_entropy(x: f64, q: u64) -> Result<f64> {
    let qf = check_q(q)?;
    if !(x > 0.0 && x < 1.0 - 1.0 / qf) {
        return Err(Error::Domain(format!(
            "H_q needs 0 < x < 1 - 1/q, got x={x}, q={q}"
        )));
    }
    Ok(entropy_unchecked(x, qf))
}

fn entropy_unchecked(x: f64, qf: f64) -> f64 {
    (x * (qf - 1.0).ln() - x * x.ln() - (1.0 - x) * (1.0 - x).ln()) / qf.ln()
}

/// Inverse of [`q_entropy`] on `(0, 1 − 1/q)` by bisection, for `0 < y < 1`.
pub fn q_entropy_inv(y: f64, q: u64) -> Result<f64> {
    let qf = check_q(q)?;
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!(
            "H_q inverse needs 0 < y < 1, got {y}"
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0 - 1.0 / qf);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || hi - lo <= 1e-15 {
            break;
        }
        if entropy_unchecked(mid, qf) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `H_q⁻¹(K/N)` comparison point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub q: u64,
    /// Absent when `K/N ∉ (0, 1)`.
    pub hq_inv: Option<f64>,
}

/// Every bound evaluated at one `(K, N, L, β, κ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k: usize,
    pub n: usize,
    pub l: usize,
    pub beta: f64,
    pub kappa: f64,
    pub r: f64,
    pub c: f64,
    pub kn_ratio: f64,
    /// Bisection threshold; `1` when non-binding.
    pub gamma_star: f64,
    /// Lambert closed form; absent when `K/N > 1/2`.
    pub gamma_star_closed: Option<f64>,
    /// False when `K/N > 1/2` and the condition constrains nothing.
    pub binding: bool,
    /// Raw `1 − 2 exp(−KL/r)`, possibly negative.
    pub success_prob_lower: f64,
    pub success_vacuous: bool,
    /// Side condition `K/N ≤ 12 (2β + κ)/κ² = r/2`.
    pub domain_ok: bool,
    pub entropy_comparison: Vec<EntropyPoint>,
}

pub fn bound_report(
    k: usize,
    n: usize,
    l: usize,
    params: &SubGaussianParams,
    entropy_qs: &[u64],
) -> Result<BoundReport> {
    if k == 0 || n == 0 || l == 0 {
        return Err(Error::Domain(format!(
            "K, N, L must be positive, got ({k}, {n}, {l})"
        )));
    }
    let r = r_param(params);
    let c = c_param(params);
    let kn_ratio = k as f64 / n as f64;
    let binding = threshold_is_binding(kn_ratio);
    let gamma_star = gamma_threshold_bisect(kn_ratio, r)?;
    let gamma_star_closed = if binding {
        Some(gamma_threshold_closed(kn_ratio, r)?)
    } else {
        None
    };
    let success_prob_lower = success_prob_bound(k, l, r);
    let entropy_comparison = entropy_qs
        .iter()
        .map(|&q| {
            Ok(EntropyPoint {
                q,
                hq_inv: if kn_ratio < 1.0 {
                    Some(q_entropy_inv(kn_ratio, q)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundReport {
        k,
        n,
        l,
        beta: params.beta,
        kappa: params.kappa,
        r,
        c,
        kn_ratio,
        gamma_star,
        gamma_star_closed,
        binding,
        success_prob_lower,
        success_vacuous: is_vacuous(success_prob_lower),
        domain_ok: kn_ratio
            <= 12.0 * (2.0 * params.beta + params.kappa) / (params.kappa * params.kappa),
        entropy_comparison,
    })
}

/// One row of the threshold curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub kn_ratio: f64,
    pub gamma_star: f64,
    /// The zero-forcing line `γ = K/N`.
    pub k_over_n_line: f64,
    pub hq_inv: Option<f64>,
}

/// `points` evenly spaced `K/N` values in `(0, max_kn]`.
pub fn threshold_curve(r: f64, q: u64, max_kn: f64, points: usize) -> Result<Vec<CurvePoint>> {
    (1..=points)
        .map(|i| {
            let kn = max_kn * i as f64 / points as f64;
            Ok(CurvePoint {
                kn_ratio: kn,
                gamma_star: gamma_threshold_bisect(kn, r)?,
                k_over_n_line: kn.min(1.0),
                hq_inv: if kn < 1.0 {
                    Some(q_entropy_inv(kn, q)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

pub const CURVE_CSV_HEADER: &str = "kn_ratio,gamma_star,K_over_N_line,Hq_inv";

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for p in points {
        let hq = p.hq_inv.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.kn_ratio, p.gamma_star, p.k_over_n_line, hq
        ));
    }
    out
}
