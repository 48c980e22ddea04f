//! Cross-module checks: the conic epigraph block for the sum of the top
//! eigenvalues against the direct spectral computation, solver-built
//! relaxations against spectral oracles, and packed-vector properties.

use lowrank_core::algos::truncated_svd;
use lowrank_core::conic::{smat, solve, svec, SolveSettings};
use lowrank_core::models::{build_rank_k_svd, build_sum_top_k_model};
use lowrank_core::specfun::{sum_top_k_eig, SymMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn top_k_block_optimum_equals_eigen_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let settings = SolveSettings::with_tol(1e-8);
    for trial in 0..20 {
        let n = 3 + trial % 5;
        let k = 1 + trial % n;
        let x = SymMatrix::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap();
        let model = build_sum_top_k_model(&x, k).unwrap();
        let sol = solve(&model.problem, &settings).unwrap();
        let oracle = sum_top_k_eig(&x, k).unwrap();
        assert!(
            (sol.objective - oracle).abs() <= 1e-5 * (1.0 + oracle.abs()),
            "trial {trial}: block optimum {} vs eigen sum {oracle}",
            sol.objective
        );
    }
}

#[test]
fn rank_k_model_matches_truncation_on_rectangular_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let settings = SolveSettings::with_tol(1e-7);
    for trial in 0..10 {
        let r = 3 + trial % 4;
        let c = 3 + (trial / 2) % 4;
        let k = 1 + trial % r.min(c);
        let a = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let sol = solve(&build_rank_k_svd(&a, k).unwrap().problem, &settings).unwrap();
        let oracle = 0.5 * (&a - truncated_svd(&a, k).unwrap()).norm_squared();
        assert!(
            (sol.objective - oracle).abs() <= 1e-4 * (1.0 + oracle),
            "trial {trial}: {} vs {oracle}",
            sol.objective
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svec_round_trip_preserves_matrix(vals in proptest::collection::vec(-10.0f64..10.0, 1..28)) {
        // grow vals to the nearest triangular length
        let mut n = 1;
        while n * (n + 1) / 2 < vals.len() { n += 1; }
        let mut padded = vals.clone();
        padded.resize(n * (n + 1) / 2, 0.0);
        let x = smat(&padded).unwrap();
        let packed = svec(&x);
        let back = smat(packed.as_slice()).unwrap();
        prop_assert!(back.sub(&x).norm_max() < 1e-12);
    }

    #[test]
    fn svec_preserves_inner_products(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1 + (seed as usize) % 6;
        let x = SymMatrix::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap();
        let y = SymMatrix::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap();
        let via_trace = x.dot(&y);
        let via_packed = svec(&x).dot(&svec(&y));
        prop_assert!((via_trace - via_packed).abs() <= 1e-10 * (1.0 + via_trace.abs()));
    }
}
