//! Sparse encoding-matrix synthesis for multi-user linearly-separable
//! distributed computing.
//!
//! `K` users each demand a linear combination of `L` subfunction outputs
//! (`F`, `K × L`). `N` servers compute subsets of the subfunctions and
//! broadcast one linear combination each (`E`, `N × L`); users combine what
//! they receive (`D`, `K × N`). Decoding is exact iff `D E = F`, and the
//! computation cost is the fraction of nonzeros in `E`.
//!
//! * [`matrix`]: dense linear algebra and seeded random ensembles.
//! * [`solvers`]: zero-forcing, exhaustive ℓ0 and basis-pursuit synthesis of `E`.
//! * [`bounds`]: Lambert-W sparsity threshold, sub-Gaussian constants and
//!   related closed forms.
//! * [`rip`]: exhaustive restricted isometry constants and certificates.
//! * [`protocol`]: the compute / transmit / decode round.
//! * [`experiment`]: instance generation and Monte Carlo sweeps.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod protocol;
pub mod rip;
pub mod solvers;
pub mod subsets;

pub use error::{Error, Result};
pub use matrix::{Mat, RngSeed};

/// Cross-module checks through the public API.
#[cfg(test)]
mod pipeline {
    use crate::bounds::{bound_report, kl_condition, SubGaussianParams};
    use crate::experiment::{generate_instance, Demand, InstanceConfig};
    use crate::matrix::{matmul, norm0, Ensemble};
    use crate::protocol::{derive_assignment, run_round, Dataset, RoundOptions, SubfunctionSpec};
    use crate::solvers::{solve, Method, SchemeOutcome, SolverConfig};
    use crate::RngSeed;
    use proptest::prelude::*;

    fn datasets(l: usize, offset: f64) -> Vec<Dataset> {
        (0..l)
            .map(|id| Dataset {
                id,
                values: vec![id as f64 + offset, 2.0 - offset, 0.5 * offset],
            })
            .collect()
    }

    #[test]
    fn generated_instances_flow_through_every_solver() {
        for (ensemble, demand) in [
            (Ensemble::Gaussian, Demand::RandomDense),
            (Ensemble::Rademacher, Demand::RandomDense),
            (Ensemble::Gaussian, Demand::PlantedSparse(1)),
        ] {
            let cfg = InstanceConfig {
                k: 3,
                n: 7,
                l: 4,
                ensemble,
                seed: RngSeed(42),
                demand,
            };
            let inst = generate_instance(&cfg).unwrap();
            for method in [Method::Zf, Method::L0, Method::Bp] {
                let out = match solve(
                    method,
                    &inst.d,
                    &inst.f,
                    RngSeed(1),
                    &SolverConfig::default(),
                ) {
                    Ok(o) => o,
                    // Rademacher D can have singular square submatrices; zero-forcing
                    // may legitimately exhaust its draws there.
                    Err(e) if ensemble == Ensemble::Rademacher && method == Method::Zf => {
                        eprintln!("skipping zf on rademacher: {e}");
                        continue;
                    }
                    Err(e) => panic!("{method} {ensemble:?}: {e}"),
                };
                let assigned: usize = derive_assignment(&out.e, 1e-8).iter().map(Vec::len).sum();
                assert_eq!(assigned as f64 / 28.0, out.gamma);
                assert_eq!(norm0(&out.e, 1e-8), assigned);
                for draw in 0..5 {
                    let t = run_round(
                        &inst.f,
                        &inst.d,
                        &out.e,
                        &datasets(4, draw as f64 * 0.37),
                        &vec![SubfunctionSpec::sum(); 4],
                        &RoundOptions::default(),
                    )
                    .unwrap();
                    assert!(t.exact, "{method} {ensemble:?} draw {draw}");
                }
            }
        }
    }

    #[test]
    fn outcome_json_round_trip() {
        let inst = generate_instance(&InstanceConfig {
            k: 2,
            n: 5,
            l: 3,
            ensemble: Ensemble::Gaussian,
            seed: RngSeed(3),
            demand: Demand::RandomDense,
        })
        .unwrap();
        let out = solve(
            Method::Bp,
            &inst.d,
            &inst.f,
            RngSeed(0),
            &SolverConfig::default(),
        )
        .unwrap();
        let text = serde_json::to_string(&out).unwrap();
        let back: SchemeOutcome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out);
        let de = matmul(&inst.d, &back.e).unwrap();
        assert!(de.max_abs_diff(&inst.f).unwrap() <= 1e-9 * (1.0 + inst.f.max_abs()));
    }

    #[test]
    fn bound_report_agrees_with_kl_condition_at_threshold() {
        // At γ* the normalized rate condition is tight; with r = 1 the raw-count
        // condition is the same inequality.
        let params = SubGaussianParams::new(1.0, 12.0 + 192f64.sqrt()).unwrap();
        let rep = bound_report(30, 100, 10, &params, &[]).unwrap();
        assert!((rep.r - 1.0).abs() < 1e-12);
        let budget = (rep.gamma_star * 1000.0).floor() as usize;
        assert!(kl_condition(30, 100, 10, budget, rep.r));
        assert!(!kl_condition(30, 100, 10, budget + 2, rep.r));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn zero_forcing_respects_k_over_n(seed in any::<u64>(), k in 1usize..5, extra in 0usize..6, l in 1usize..5) {
            let n = k + extra;
            let inst = generate_instance(&InstanceConfig {
                k, n, l,
                ensemble: Ensemble::Gaussian,
                seed: RngSeed(seed),
                demand: Demand::RandomDense,
            }).unwrap();
            let out = solve(Method::Zf, &inst.d, &inst.f, RngSeed(seed ^ 1), &SolverConfig::default()).unwrap();
            prop_assert!(norm0(&out.e, 1e-8) <= k * l);
            prop_assert!(out.gamma <= k as f64 / n as f64);
        }
    }
}
