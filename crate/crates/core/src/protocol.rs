//! One round of the distributed linearly-separable computation protocol.
//!
//! 1. Every server `n` evaluates the subfunctions in its assignment
//!    `𝒲_n = supp(E(n,:))`, producing files `w_l = g_l(D_l)`.
//! 2. Server `n` broadcasts `z_n = Σ_{l∈𝒲_n} E(n,l) w_l` to the users
//!    `T_n = supp(D(:,n))`.
//! 3. User `k` decodes `f′_k = Σ_{n : k∈T_n} D(k,n) z_n` and should obtain
//!    `f_k = Σ_l F(k,l) w_l`.
//!
//! Encoding and decoding are computed from the assignment and multicast sets
//! alone, so locality holds by construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{support_with_scale, Mat, DEFAULT_EPS_ZERO};
use crate::solvers::row_supports;

/// Default relative decoding tolerance.
pub const DEFAULT_DECODE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubfunctionKind {
    Sum,
    Mean,
    Max,
    /// Ascending coefficients evaluated at the dataset's first value.
    Polyval,
    /// `(Σ|v|^p)^(1/p)` with `params = [p]`, `p ≥ 1`.
    Pnorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubfunctionSpec {
    pub kind: SubfunctionKind,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl SubfunctionSpec {
    pub fn sum() -> Self {
        SubfunctionSpec {
            kind: SubfunctionKind::Sum,
            params: Vec::new(),
        }
    }

    fn check(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::KindMismatch {
                index,
                reason: reason.to_string(),
            })
        };
        if self.params.iter().any(|p| !p.is_finite()) {
            return bad("parameters must be finite");
        }
        match self.kind {
            SubfunctionKind::Sum | SubfunctionKind::Mean | SubfunctionKind::Max => {
                if !self.params.is_empty() {
                    return bad("sum, mean and max take no parameters");
                }
            }
            SubfunctionKind::Polyval => {
                if self.params.is_empty() {
                    return bad("polyval needs at least one coefficient");
                }
            }
            SubfunctionKind::Pnorm => {
                if self.params.len() != 1 || self.params[0] < 1.0 {
                    return bad("pnorm takes exactly one parameter p >= 1");
                }
            }
        }
        Ok(())
    }

    /// `g(values)`.
    pub fn apply(&self, index: usize, values: &[f64]) -> Result<f64> {
        self.check(index)?;
        if values.is_empty() {
            return Err(Error::KindMismatch {
                index,
                reason: "dataset is empty".into(),
            });
        }
        let out = match self.kind {
            SubfunctionKind::Sum => values.iter().sum(),
            SubfunctionKind::Mean => values.iter().sum::<f64>() / values.len() as f64,
            SubfunctionKind::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            SubfunctionKind::Polyval => {
                let x = values[0];
                self.params.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            SubfunctionKind::Pnorm => {
                let p = self.params[0];
                values
                    .iter()
                    .map(|v| v.abs().powf(p))
                    .sum::<f64>()
                    .powf(1.0 / p)
            }
        };
        if !out.is_finite() {
            return Err(Error::KindMismatch {
                index,
                reason: format!("output {out} is not finite"),
            });
        }
        Ok(out)
    }
}

/// `w_l = g_l(D_l)` for every dataset.
pub fn compute_files(datasets: &[Dataset], subfunctions: &[SubfunctionSpec]) -> Result<Vec<f64>> {
    if datasets.len() != subfunctions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} datasets but {} subfunctions",
            datasets.len(),
            subfunctions.len()
        )));
    }
    datasets
        .iter()
        .zip(subfunctions)
        .enumerate()
        .map(|(l, (ds, g))| g.apply(l, &ds.values))
        .collect()
}

/// `𝒲_n`: the subfunctions server `n` computes.
pub fn derive_assignment(e: &Mat, eps_zero: f64) -> Vec<Vec<usize>> {
    row_supports(e, eps_zero)
}

/// `T_n`: the users server `n` transmits to.
pub fn multicast_targets(d: &Mat, eps_zero: f64) -> Vec<Vec<usize>> {
    let scale = d.max_abs();
    (0..d.cols())
        .map(|n| support_with_scale(&d.col(n), eps_zero, scale))
        .collect()
}

/// `z_n = Σ_{l∈𝒲_n} E(n,l) w_l`. Entries of `E` outside the assignment are
/// never read.
pub fn server_encode(e: &Mat, assignment: &[Vec<usize>], w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != e.cols() || assignment.len() != e.rows() {
        return Err(Error::DimensionMismatch(format!(
            "E is {}x{}, w has length {}, assignment has {} servers",
            e.rows(),
            e.cols(),
            w.len(),
            assignment.len()
        )));
    }
    check_indices(assignment, e.cols(), "assignment")?;
    Ok(assignment
        .par_iter()
        .enumerate()
        .map(|(n, files)| files.iter().map(|&l| e.get(n, l) * w[l]).sum())
        .collect())
}

/// `f′_k = Σ_{n : k∈T_n} D(k,n) z_n`. User `k` only hears servers whose
/// multicast set contains it.
pub fn user_decode(d: &Mat, targets: &[Vec<usize>], z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != d.cols() || targets.len() != d.cols() {
        return Err(Error::DimensionMismatch(format!(
            "D is {}x{}, z has length {}, {} multicast sets",
            d.rows(),
            d.cols(),
            z.len(),
            targets.len()
        )));
    }
    check_indices(targets, d.rows(), "multicast set")?;
    let mut heard: Vec<Vec<usize>> = vec![Vec::new(); d.rows()];
    for (n, users) in targets.iter().enumerate() {
        for &k in users {
            heard[k].push(n);
        }
    }
    Ok(heard
        .par_iter()
        .enumerate()
        .map(|(k, servers)| servers.iter().map(|&n| d.get(k, n) * z[n]).sum())
        .collect())
}

fn check_indices(sets: &[Vec<usize>], bound: usize, what: &str) -> Result<()> {
    for (n, set) in sets.iter().enumerate() {
        if let Some(&bad) = set.iter().find(|&&i| i >= bound) {
            return Err(Error::DimensionMismatch(format!(
                "{what} {n} references index {bad} >= {bound}"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// `𝒲_n` per server.
    pub assignment: Vec<Vec<usize>>,
    /// `T_n` per server.
    pub multicast_sets: Vec<Vec<usize>>,
    pub f_expected: Vec<f64>,
    pub f_decoded: Vec<f64>,
    pub max_abs_error: f64,
    pub exact: bool,
    pub comm_messages: usize,
}

/// `Σ_n |T_n|`.
pub fn communication_cost(transcript: &Transcript) -> usize {
    transcript.multicast_sets.iter().map(Vec::len).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOptions {
    pub decode_tol: f64,
    pub eps_zero: f64,
}

impl Default for RoundOptions {
    fn default() -> Self {
        RoundOptions {
            decode_tol: DEFAULT_DECODE_TOL,
            eps_zero: DEFAULT_EPS_ZERO,
        }
    }
}

/// Everything a round needs, in the JSON layout read by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundInput {
    #[serde(rename = "F")]
    pub f: Mat,
    #[serde(rename = "D")]
    pub d: Mat,
    #[serde(rename = "E")]
    pub e: Mat,
    pub datasets: Vec<Dataset>,
    pub subfunctions: Vec<SubfunctionSpec>,
}

impl RoundInput {
    pub fn run(&self, opts: &RoundOptions) -> Result<Transcript> {
        run_round(
            &self.f,
            &self.d,
            &self.e,
            &self.datasets,
            &self.subfunctions,
            opts,
        )
    }
}

pub fn run_round(
    f: &Mat,
    d: &Mat,
    e: &Mat,
    datasets: &[Dataset],
    subfunctions: &[SubfunctionSpec],
    opts: &RoundOptions,
) -> Result<Transcript> {
    let (k, l, n) = (f.rows(), f.cols(), d.cols());
    if d.rows() != k || e.rows() != n || e.cols() != l || datasets.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "F {}x{}, D {}x{}, E {}x{}, {} datasets",
            f.rows(),
            f.cols(),
            d.rows(),
            d.cols(),
            e.rows(),
            e.cols(),
            datasets.len()
        )));
    }
    let w = compute_files(datasets, subfunctions)?;
    let f_expected = f.mul_vec(&w)?;
    let assignment = derive_assignment(e, opts.eps_zero);
    let z = server_encode(e, &assignment, &w)?;
    let multicast_sets = multicast_targets(d, opts.eps_zero);
    let f_decoded = user_decode(d, &multicast_sets, &z)?;
    let max_abs_error = f_expected
        .iter()
        .zip(&f_decoded)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = f_expected.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let exact = max_abs_error <= opts.decode_tol * (1.0 + scale);
    let comm_messages = multicast_sets.iter().map(Vec::len).sum();
    Ok(Transcript {
        w,
        z,
        assignment,
        multicast_sets,
        f_expected,
        f_decoded,
        max_abs_error,
        exact,
        comm_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gaussian_matrix, matmul, RngSeed};
    use crate::solvers::{solve, Method, SolverConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn spec(kind: SubfunctionKind, params: &[f64]) -> SubfunctionSpec {
        SubfunctionSpec {
            kind,
            params: params.to_vec(),
        }
    }

    fn random_datasets(l: usize, seed: RngSeed) -> Vec<Dataset> {
        let mut rng = seed.rng();
        (0..l)
            .map(|id| Dataset {
                id,
                values: (0..5).map(|_| rng.random_range(-10.0..10.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn subfunction_examples() {
        let apply = |s: SubfunctionSpec, v: &[f64]| s.apply(0, v).unwrap();
        assert_eq!(apply(SubfunctionSpec::sum(), &[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(
            apply(spec(SubfunctionKind::Mean, &[]), &[1.0, 2.0, 6.0]),
            3.0
        );
        assert_eq!(
            apply(spec(SubfunctionKind::Max, &[]), &[-1.0, 4.0, 2.0]),
            4.0
        );
        assert_eq!(
            apply(spec(SubfunctionKind::Polyval, &[1.0, 0.0, 2.0]), &[3.0]),
            19.0
        );
        assert_eq!(
            apply(spec(SubfunctionKind::Pnorm, &[2.0]), &[3.0, 4.0]),
            5.0
        );
        assert_eq!(
            apply(spec(SubfunctionKind::Pnorm, &[1.0]), &[3.0, -4.0]),
            7.0
        );
    }

    #[test]
    fn malformed_subfunctions() {
        let cases = [
            spec(SubfunctionKind::Polyval, &[]),
            spec(SubfunctionKind::Pnorm, &[0.5]),
            spec(SubfunctionKind::Pnorm, &[]),
            spec(SubfunctionKind::Sum, &[1.0]),
            spec(SubfunctionKind::Polyval, &[f64::NAN]),
        ];
        for (i, s) in cases.iter().enumerate() {
            assert!(
                matches!(s.apply(i, &[1.0]), Err(Error::KindMismatch { index, .. }) if index == i)
            );
        }
        assert!(matches!(
            SubfunctionSpec::sum().apply(3, &[]),
            Err(Error::KindMismatch { index: 3, .. })
        ));
        let ds = random_datasets(2, RngSeed(0));
        assert!(matches!(
            compute_files(&ds, &[SubfunctionSpec::sum()]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn subfunction_json() {
        let s: SubfunctionSpec =
            serde_json::from_str(r#"{"kind":"polyval","params":[1,0,2]}"#).unwrap();
        assert_eq!(s, spec(SubfunctionKind::Polyval, &[1.0, 0.0, 2.0]));
        let s: SubfunctionSpec = serde_json::from_str(r#"{"kind":"sum"}"#).unwrap();
        assert_eq!(s, SubfunctionSpec::sum());
    }

    #[test]
    fn assignment_examples() {
        assert!(derive_assignment(&Mat::zeros(3, 2), 1e-8)
            .iter()
            .all(Vec::is_empty));
        let mut e = Mat::zeros(3, 4);
        for l in 0..4 {
            e.set(1, l, 1.0 + l as f64);
        }
        let a = derive_assignment(&e, 1e-8);
        assert_eq!(a.iter().filter(|s| !s.is_empty()).count(), 1);
        assert_eq!(a[1], vec![0, 1, 2, 3]);

        let d = gaussian_matrix(4, 16, RngSeed(2));
        let f = gaussian_matrix(4, 8, RngSeed(3));
        let out = solve(Method::Zf, &d, &f, RngSeed(4), &SolverConfig::default()).unwrap();
        let total: usize = derive_assignment(&out.e, 1e-8).iter().map(Vec::len).sum();
        assert!(total <= 4 * 8);
    }

    #[test]
    fn multicast_examples() {
        let d = gaussian_matrix(3, 5, RngSeed(1));
        assert!(multicast_targets(&d, 1e-8)
            .iter()
            .all(|t| t == &vec![0, 1, 2]));
        let t = multicast_targets(&Mat::identity(3), 1e-8);
        assert_eq!(t, vec![vec![0], vec![1], vec![2]]);
        let mut z = d.clone();
        z.set_col(2, &[0.0; 3]);
        let t = multicast_targets(&z, 1e-8);
        assert!(t[2].is_empty());
        assert_eq!(t.iter().map(Vec::len).sum::<usize>(), 5 * 3 - 3);
    }

    #[test]
    fn encode_decode_examples() {
        let w = [1.0, 2.0, 3.0];
        let id = Mat::identity(3);
        assert_eq!(
            server_encode(&id, &derive_assignment(&id, 1e-8), &w).unwrap(),
            w
        );
        let e = Mat::from_rows(&[[1.0, 1.0, 1.0]]);
        assert_eq!(server_encode(&e, &[vec![0, 1, 2]], &w).unwrap(), vec![6.0]);
        let d = Mat::from_rows(&[[1.0, 1.0]]);
        assert_eq!(
            user_decode(&d, &multicast_targets(&d, 1e-8), &[2.0, 3.0]).unwrap(),
            vec![5.0]
        );
        assert_eq!(
            user_decode(&id, &multicast_targets(&id, 1e-8), &w).unwrap(),
            w
        );

        let e = gaussian_matrix(6, 4, RngSeed(8));
        let w: Vec<f64> = gaussian_matrix(4, 1, RngSeed(9)).data().to_vec();
        let z = server_encode(&e, &derive_assignment(&e, 1e-8), &w).unwrap();
        let direct = e.mul_vec(&w).unwrap();
        assert!(z
            .iter()
            .zip(&direct)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())));
        let d = gaussian_matrix(3, 6, RngSeed(10));
        let f = user_decode(&d, &multicast_targets(&d, 1e-8), &z).unwrap();
        let direct = d.mul_vec(&z).unwrap();
        assert!(f
            .iter()
            .zip(&direct)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())));

        assert!(server_encode(&e, &derive_assignment(&e, 1e-8), &[1.0]).is_err());
        assert!(user_decode(&d, &multicast_targets(&d, 1e-8), &[1.0]).is_err());
        assert!(server_encode(&e, &vec![vec![9]; 6], &w).is_err());
    }

    #[test]
    fn locality_ignores_unassigned_entries() {
        let e = Mat::from_rows(&[[2.0, 100.0]]);
        // server 0 is only assigned file 0; entry (0,1) must not be read
        assert_eq!(
            server_encode(&e, &[vec![0]], &[1.0, 1.0]).unwrap(),
            vec![2.0]
        );
        let d = Mat::from_rows(&[[1.0, 7.0]]);
        assert_eq!(
            user_decode(&d, &[vec![0], vec![]], &[1.0, 1.0]).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn zero_demand_round() {
        let ds = random_datasets(3, RngSeed(5));
        let subs = vec![SubfunctionSpec::sum(); 3];
        let t = run_round(
            &Mat::zeros(2, 3),
            &gaussian_matrix(2, 4, RngSeed(1)),
            &Mat::zeros(4, 3),
            &ds,
            &subs,
            &RoundOptions::default(),
        )
        .unwrap();
        assert!(t.exact);
        assert!(t.f_expected.iter().chain(&t.f_decoded).all(|v| *v == 0.0));
        assert_eq!(communication_cost(&t), 8);
        assert_eq!(t.comm_messages, 8);
    }

    #[test]
    fn round_exact_and_corrupted() {
        let d = gaussian_matrix(3, 8, RngSeed(20));
        let f = gaussian_matrix(3, 4, RngSeed(21));
        let subs = vec![SubfunctionSpec::sum(); 4];
        for method in [Method::Zf, Method::L0, Method::Bp] {
            let out = solve(method, &d, &f, RngSeed(22), &SolverConfig::default()).unwrap();
            let mut bad = out.e.clone();
            bad.set(0, 0, bad.get(0, 0) + 1.0);
            for draw in 0..5 {
                let ds = random_datasets(4, RngSeed(100 + draw));
                let t = run_round(&f, &d, &out.e, &ds, &subs, &RoundOptions::default()).unwrap();
                assert!(t.exact, "{method} draw {draw}: {}", t.max_abs_error);
                let assigned: usize = t.assignment.iter().map(Vec::len).sum();
                assert_eq!(assigned as f64 / 32.0, out.gamma);
                let t = run_round(&f, &d, &bad, &ds, &subs, &RoundOptions::default()).unwrap();
                assert!(!t.exact);
            }
        }
    }

    #[test]
    fn round_input_json() {
        let d = Mat::identity(2);
        let input = RoundInput {
            f: d.clone(),
            d: d.clone(),
            e: d.clone(),
            datasets: random_datasets(2, RngSeed(0)),
            subfunctions: vec![SubfunctionSpec::sum(), spec(SubfunctionKind::Pnorm, &[3.0])],
        };
        let js = serde_json::to_value(&input).unwrap();
        for key in ["F", "D", "E", "datasets", "subfunctions"] {
            assert!(js.get(key).is_some(), "{key}");
        }
        let back: RoundInput = serde_json::from_value(js).unwrap();
        assert_eq!(back, input);
        assert!(back.run(&RoundOptions::default()).unwrap().exact);
        let bad = RoundInput {
            e: Mat::identity(3),
            ..input
        };
        assert!(matches!(
            bad.run(&RoundOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn feasible_encoding_decodes_every_dataset(seed in any::<u64>(), draws in 1u64..6) {
            let base = RngSeed(seed);
            let d = gaussian_matrix(3, 7, base.derive(&[0]));
            let f = gaussian_matrix(3, 5, base.derive(&[1]));
            let out = solve(Method::Zf, &d, &f, base.derive(&[2]), &SolverConfig::default()).unwrap();
            prop_assert!(matmul(&d, &out.e).unwrap().max_abs_diff(&f).unwrap() <= 1e-9 * (1.0 + f.max_abs()));
            let subs = vec![
                SubfunctionSpec::sum(),
                spec(SubfunctionKind::Mean, &[]),
                spec(SubfunctionKind::Max, &[]),
                spec(SubfunctionKind::Polyval, &[0.5, -1.0, 0.25]),
                spec(SubfunctionKind::Pnorm, &[2.0]),
            ];
            for draw in 0..draws {
                let ds = random_datasets(5, base.derive(&[3, draw]));
                let t = run_round(&f, &d, &out.e, &ds, &subs, &RoundOptions::default()).unwrap();
                prop_assert!(t.exact, "error {}", t.max_abs_error);
                prop_assert_eq!(t.comm_messages, communication_cost(&t));
            }
        }
    }
}
