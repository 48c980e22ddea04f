//! Synthetic instance generators.
//!
//! All randomness flows through `ChaCha8`, a counter-based stream cipher
//! generator: seeding with the same 64-bit value reproduces instances
//! bit-for-bit across platforms and runs. Matrices are filled in a fixed
//! order (column-major per matrix, matrices in declaration order), so a
//! generator call is a pure function of its arguments.

use lowrank_core::algos::DoptInstance;
use lowrank_core::models::{NmfInstance, RrrInstance};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * std
    })
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Regression data with a planted low-rank coefficient matrix plus the
/// validation and test splits of the same ground truth.
#[derive(Debug, Clone)]
pub struct RrrSynthetic {
    pub beta_true: DMatrix<f64>,
    pub train: RrrInstance,
    /// Held-out split of the same size as the train split, for selecting
    /// the rank-penalty weight.
    pub val: RrrInstance,
    /// Fresh observations for out-of-sample error.
    pub test: RrrInstance,
}

/// Generates a reduced-rank regression instance: `beta_true = U V^T` with
/// standard normal factors, standard normal design, and response
/// `Y = X beta_true + E` with noise standard deviation `sigma`.
///
/// The returned instance carries `gamma = 1e6` (effectively unregularized
/// ridge) and `mu = 0`; experiment drivers override `mu` along their grid.
pub fn gen_rrr(
    n: usize,
    p: usize,
    m: usize,
    k_true: usize,
    sigma: f64,
    seed: u64,
) -> RrrInstance {
    gen_rrr_full(n, p, m, k_true, sigma, seed, m).train
}

/// Full synthetic bundle: train, validation (same `m`), and a test split
/// with `m_test` rows, all sharing one planted coefficient matrix. The
/// train split is bit-identical to [`gen_rrr`] with the same arguments.
pub fn gen_rrr_full(
    n: usize,
    p: usize,
    m: usize,
    k_true: usize,
    sigma: f64,
    seed: u64,
    m_test: usize,
) -> RrrSynthetic {
    assert!(k_true <= n.min(p), "k_true must not exceed min(n, p)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = normal_matrix(&mut rng, p, k_true, 1.0);
    let v = normal_matrix(&mut rng, n, k_true, 1.0);
    let beta_true = &u * v.transpose();

    let mut split = |rows: usize, rng: &mut ChaCha8Rng| {
        let x = normal_matrix(rng, rows, p, 1.0);
        let e = normal_matrix(rng, rows, n, sigma);
        let y = &x * &beta_true + e;
        RrrInstance {
            schema_version: 1,
            x_data: x,
            y_data: y,
            gamma: 1e6,
            mu: 0.0,
        }
    };
    let train = split(m, &mut rng);
    let val = split(m, &mut rng);
    let test = split(m_test, &mut rng);
    RrrSynthetic {
        beta_true,
        train,
        val,
        test,
    }
}

/// Generates a nonnegative factorization instance: `A = U U^T + E` with
/// `U` uniform on `[0, 1]`, noise variance `0.0125 * k_true`, and negative
/// entries clamped to zero. `noiseless` skips the noise, leaving an
/// exactly factorable matrix.
pub fn gen_nmf(n: usize, k_true: usize, seed: u64, noiseless: bool) -> NmfInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = uniform_matrix(&mut rng, n, k_true);
    let mut a = &u * u.transpose();
    if !noiseless {
        let std = (0.0125 * k_true as f64).sqrt();
        let e = normal_matrix(&mut rng, n, n, std);
        a += e;
    }
    a.apply(|v| *v = v.max(0.0));
    // exact symmetry after the asymmetric noise
    let a = 0.5 * (&a + a.transpose());
    NmfInstance {
        schema_version: 1,
        a,
        k: k_true,
    }
}

/// Generates an experiment-selection instance: measurement vectors with
/// independent normal entries of standard deviation `1 / sqrt(n)`, so
/// column norms concentrate near one. The budget is a placeholder `1`;
/// drivers set it per sweep point.
pub fn gen_dopt(n: usize, m: usize, seed: u64) -> DoptInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = normal_matrix(&mut rng, n, m, 1.0 / (n as f64).sqrt());
    DoptInstance {
        schema_version: 1,
        a,
        k: 1,
        eps: 1e-6,
    }
}
