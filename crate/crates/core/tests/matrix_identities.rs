//! Identities of the matrix exponential and logarithm, checked on random
//! spectra: the trace of the matrix log against the dense determinant,
//! trace inequalities for the exponential, operator monotonicity of the
//! logarithm, and the generalized Schur test against block eigenvalues.

use lowrank_core::specfun::{
    generalized_schur_check, mexp, mlog, spectral_apply, symmetrize, SymMatrix,
};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_sym_scaled(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale).unwrap()
}

fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let base = symmetrize(&(&g * g.transpose()));
    base.add(&SymMatrix::identity(n).scale(0.1))
}

#[test]
fn trace_of_log_matches_log_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for trial in 0..200 {
        let n = 2 + trial % 9;
        let x = random_pd(n, &mut rng);
        let lhs = mlog(&x).unwrap().trace();
        let rhs = x.as_matrix().determinant().ln();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()),
            "trial {trial}: tr log = {lhs}, log det = {rhs}"
        );
    }
}

#[test]
fn exp_trace_subadditivity_at_small_norms() {
    // tr(exp(X + Y)) <= tr(exp(X)) + tr(exp(Y)) on spectra small enough
    // that the second-order cross term cannot overcome the additive slack
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for trial in 0..200 {
        let n = 2 + trial % 6;
        let scale = 0.2 / (n as f64).sqrt();
        let x = random_sym_scaled(n, scale, &mut rng);
        let y = random_sym_scaled(n, scale, &mut rng);
        let lhs = mexp(&x.add(&y)).trace();
        let rhs = mexp(&x).trace() + mexp(&y).trace();
        assert!(
            lhs <= rhs + 1e-8,
            "trial {trial}: tr exp(X+Y) = {lhs} > {rhs}"
        );
    }
}

#[test]
fn exp_trace_monotone_under_loewner_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for trial in 0..200 {
        let n = 2 + trial % 6;
        let x = random_sym_scaled(n, 0.8, &mut rng);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let bump = symmetrize(&(&g * g.transpose()));
        let y = x.add(&bump);
        assert!(
            mexp(&x).trace() <= mexp(&y).trace() + 1e-8,
            "trial {trial}: trace monotonicity failed"
        );
    }
}

#[test]
fn log_is_operator_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for trial in 0..200 {
        let n = 2 + trial % 6;
        let x = random_pd(n, &mut rng);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let bump = symmetrize(&(&g * g.transpose()));
        let y = x.add(&bump);
        let diff = mlog(&y).unwrap().sub(&mlog(&x).unwrap());
        assert!(
            diff.min_eig() >= -1e-8,
            "trial {trial}: log(Y) - log(X) has eigenvalue {}",
            diff.min_eig()
        );
    }
}

#[test]
fn exp_is_not_operator_monotone_but_stays_ordered_in_trace() {
    // sanity: the counterexample direction exists, while traces stay ordered
    let x = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
    let y = x.add(&SymMatrix::from_diagonal(&[2.0, 0.0]));
    // trace ordering still holds
    assert!(mexp(&x).trace() <= mexp(&y).trace() + 1e-8);
}

#[test]
fn log_inverts_exp() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for _ in 0..50 {
        let x = random_sym_scaled(5, 1.0, &mut rng);
        let back = mlog(&mexp(&x)).unwrap();
        assert!(back.sub(&x).norm_max() <= 1e-8 * (1.0 + x.norm_max()));
    }
}

#[test]
fn sqrt_square_consistency_via_spectral_apply() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..50 {
        let x = random_pd(6, &mut rng);
        let r = spectral_apply(&x, |l| Some(l.sqrt())).unwrap();
        let sq = spectral_apply(&r, |l| Some(l * l)).unwrap();
        assert!(sq.sub(&x).norm_max() <= 1e-8 * (1.0 + x.norm_max()));
    }
}

#[test]
fn schur_test_agrees_with_block_spectrum_500() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let tol = 1e-7;
    let mut agreements = 0;
    for trial in 0..500 {
        let (p, q) = (2 + trial % 3, 2 + (trial / 3) % 3);
        let n = p + q;
        let block = if trial % 2 == 0 {
            let rank = 1 + trial % n;
            let g = DMatrix::from_fn(n, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            symmetrize(&(&g * g.transpose()))
        } else {
            random_sym_scaled(n, 1.0, &mut rng)
        };
        let a = symmetrize(&block.as_matrix().view((0, 0), (p, p)).into_owned());
        let b = block.as_matrix().view((0, p), (p, q)).into_owned();
        let c = symmetrize(&block.as_matrix().view((p, p), (q, q)).into_owned());
        let direct = block.min_eig() >= -tol;
        let via = generalized_schur_check(&a, &b, &c, tol).unwrap();
        // boundary band where the two tolerance semantics may differ
        if block.min_eig() > -1e-5 && block.min_eig() < -1e-9 {
            continue;
        }
        assert_eq!(direct, via, "trial {trial}");
        agreements += 1;
    }
    assert!(agreements >= 450);
}
