//! Heuristics and certified first-order relaxations.
//!
//! Alternating least squares for nonnegative symmetric factorization,
//! greedy and Frank-Wolfe methods for budgeted log-determinant
//! maximization (with certified upper bounds from the linearization gap),
//! the waterfilling inner solve that evaluates the spectral relaxation,
//! and duality-gap arithmetic.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::NmfInstance;
use crate::specfun::{sym_eig, symmetrize, SymMatrix};

/// Budgeted experiment-selection data: columns of `a` are the candidate
/// measurement vectors, `k` the selection budget, `eps` the prior weight
/// inside the pseudo log-determinant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoptInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// `n x m`: `m` experiment vectors in dimension `n`.
    #[serde(rename = "A", with = "crate::models::serde_mat")]
    pub a: DMatrix<f64>,
    pub k: usize,
    pub eps: f64,
}

fn default_schema_version() -> u32 {
    1
}

impl DoptInstance {
    /// Ambient dimension of the experiment vectors.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of candidate experiments.
    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 || self.m() == 0 {
            return Err(Error::invalid("empty experiment matrix"));
        }
        if self.k == 0 || self.k > self.m() {
            return Err(Error::invalid(format!("k must lie in 1..={}", self.m())));
        }
        if self.eps <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        Ok(())
    }

    /// Weighted information matrix `sum_j z_j a_j a_j^T`.
    pub fn info_matrix(&self, z: &[f64]) -> SymMatrix {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (j, &zj) in z.iter().enumerate() {
            if zj != 0.0 {
                let col = self.a.column(j);
                for r in 0..n {
                    for c in 0..n {
                        m[(r, c)] += zj * col[r] * col[c];
                    }
                }
            }
        }
        symmetrize(&m)
    }
}

/// A heuristic value together with a certified bound on the optimum.
#[derive(Debug, Clone)]
pub struct CertifiedBound {
    /// Objective value at the returned iterate.
    pub value_at_iterate: f64,
    /// Certified bound: `value_at_iterate + gap_certificate`.
    pub certified_bound: f64,
    /// Nonnegative certificate width.
    pub gap_certificate: f64,
    /// Decision vector at the best iterate.
    pub iterate: Vec<f64>,
}

impl CertifiedBound {
    fn new(value_at_iterate: f64, certified_bound: f64, iterate: Vec<f64>) -> Self {
        let gap_certificate = certified_bound - value_at_iterate;
        debug_assert!(gap_certificate >= -1e-10);
        CertifiedBound {
            value_at_iterate,
            certified_bound,
            gap_certificate,
            iterate,
        }
    }
}

/// Best rank-`k` approximation in Frobenius norm by singular value
/// truncation.
pub fn truncated_svd(a: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k > a.nrows().min(a.ncols()) {
        return Err(Error::invalid(format!(
            "k = {k} exceeds min dimension {}",
            a.nrows().min(a.ncols())
        )));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for &idx in order.iter().take(k) {
        let sigma = svd.singular_values[idx];
        if sigma <= 0.0 {
            continue;
        }
        let uc = u.column(idx);
        let vr = vt.row(idx);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[(i, j)] += sigma * uc[i] * vr[j];
            }
        }
    }
    Ok(out)
}

/// Relative duality gap. For minimization pairs, `(ub - lb) / |ub|`; when
/// the reference value vanishes the gap is absolute and flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    pub gap: f64,
    /// False when `ub = 0` forced an absolute gap.
    pub relative: bool,
}

pub fn duality_gap(ub: f64, lb: f64) -> DualityGap {
    if ub == 0.0 {
        DualityGap {
            gap: ub - lb,
            relative: false,
        }
    } else {
        DualityGap {
            gap: (ub - lb) / ub.abs(),
            relative: true,
        }
    }
}

/// Indicator of the `k` largest entries, ties broken by lowest index.
pub fn greedy_round_topk(z: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&i, &j| {
        z[j].partial_cmp(&z[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut out = vec![0.0; z.len()];
    for &i in order.iter().take(k.min(z.len())) {
        out[i] = 1.0;
    }
    out
}

/// Solves `min_{W >= 0} ||W V^T - T||_F^2 + rho ||W - V||_F^2` restated as
/// `min_{W >= 0} tr(W (G + rho I) W^T) - 2 <C + rho V, W>` with `G = V^T V`
/// and `C = T V`, by accelerated projected gradient with step `1 / L`.
///
/// Runs until the projected-gradient optimality residual
/// `max |min(W, grad)|` drops below `1e-8` or 500 inner iterations.
pub fn nnls_block(
    g: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rho: f64,
    warm: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if rho < 0.0 {
        return Err(Error::invalid("rho must be nonnegative"));
    }
    if g.nrows() != g.ncols() || c.ncols() != g.nrows() || warm.shape() != c.shape() {
        return Err(Error::invalid("nnls block dimensions do not conform"));
    }
    let k = g.nrows();
    let mut q = g.clone();
    for i in 0..k {
        q[(i, i)] += rho;
    }
    let lin = c + warm * rho; // target of the linear term
    let lmax = sym_eig(&symmetrize(&q)).values[0].max(1e-12);
    let step = 1.0 / lmax;

    let mut w = warm.clone().map(|v| v.max(0.0));
    let mut w_prev = w.clone();
    let mut tm = 1.0f64;
    for _ in 0..500 {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tm * tm).sqrt());
        let momentum = (tm - 1.0) / t_next;
        let z = &w + (&w - &w_prev) * momentum;
        let grad_z = &z * &q - &lin;
        let mut w_next = z - grad_z * step;
        w_next.apply(|v| *v = v.max(0.0));
        w_prev = w;
        w = w_next;
        tm = t_next;

        let grad = &w * &q - &lin;
        let res = kkt_residual(&w, &grad);
        if res <= 1e-8 {
            break;
        }
    }
    Ok(w)
}

/// Componentwise `max |min(w, grad)|`: zero at a KKT point of a
/// nonnegatively constrained convex program.
pub fn kkt_residual(w: &DMatrix<f64>, grad: &DMatrix<f64>) -> f64 {
    w.iter()
        .zip(grad.iter())
        .map(|(&wi, &gi)| wi.min(gi).abs())
        .fold(0.0, f64::max)
}

/// Alternating least squares for symmetric nonnegative factorization.
///
/// Alternates the two penalized nonnegative least-squares blocks with
/// coupling weight `rho_t = min(1e-4 * 2^(t-1), 1e5)`, starting from a
/// uniform random factor, and stops when the objective moves less than
/// `tol` or after `max_iter` outer rounds. Returns the best symmetric
/// factor seen and its objective `||U U^T - A||_F^2`.
pub fn als_nmf(
    inst: &NmfInstance,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, f64)> {
    inst.validate()?;
    let n = inst.n();
    let k = inst.k;
    let a = inst.a_sym().into_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
    let mut u;

    let ub_of = |f: &DMatrix<f64>| (f * f.transpose() - &a).norm_squared();
    let mut best_u = v.clone();
    let mut best_ub = ub_of(&v);
    let mut prev_obj = f64::INFINITY;

    for t in 1..=max_iter {
        let rho = (1e-4 * 2f64.powi(t as i32 - 1)).min(1e5);
        // U-step: min_{U >= 0} ||U V^T - A||^2 + rho ||U - V||^2
        let g = v.transpose() * &v;
        let c = &a * &v;
        u = nnls_block(&g, &c, rho, &v)?;
        // V-step with the fresh U
        let g = u.transpose() * &u;
        let c = &a * &u;
        v = nnls_block(&g, &c, rho, &u)?;

        for cand in [&u, &v] {
            let ub = ub_of(cand);
            if ub < best_ub {
                best_ub = ub;
                best_u = cand.clone();
            }
        }
        let obj = (&u * v.transpose() - &a).norm_squared() + rho * (&u - &v).norm_squared();
        if (prev_obj - obj).abs() < tol {
            break;
        }
        prev_obj = obj;
    }
    Ok((best_u, best_ub))
}

/// Greedy forward selection maximizing the pseudo log-determinant of the
/// accumulated information matrix; ties break at the lowest index.
pub fn submodular_greedy_dopt(inst: &DoptInstance) -> Result<(Vec<usize>, f64)> {
    inst.validate()?;
    let m = inst.m();
    let mut chosen: Vec<usize> = Vec::with_capacity(inst.k);
    let mut z = vec![0.0; m];
    let mut value = f64::NEG_INFINITY;
    for _ in 0..inst.k {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..m {
            if chosen.contains(&j) {
                continue;
            }
            z[j] = 1.0;
            let cand = crate::specfun::logdet_eps(&inst.info_matrix(&z), inst.eps)?;
            z[j] = 0.0;
            let better = match best {
                None => true,
                Some((_, bv)) => cand > bv + 1e-15,
            };
            if better {
                best = Some((j, cand));
            }
        }
        let (j, v) = best.expect("k <= m leaves a candidate");
        chosen.push(j);
        z[j] = 1.0;
        value = v;
    }
    Ok((chosen, value))
}

fn frank_wolfe<F>(m: usize, k: usize, iters: usize, mut eval: F) -> CertifiedBound
where
    // returns (objective, supergradient) at z
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut z = vec![k as f64 / m as f64; m];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_iterate = z.clone();
    let mut best_bound = f64::INFINITY;
    for t in 0..iters {
        let (val, grad) = eval(&z);
        if val > best_value {
            best_value = val;
            best_iterate = z.clone();
        }
        // linear maximization over {z in [0,1]^m, sum z <= k}: top-k of the
        // positive gradient coordinates
        let mut s = greedy_round_topk(&grad, k);
        for j in 0..m {
            if grad[j] <= 0.0 {
                s[j] = 0.0;
            }
        }
        let gap: f64 = (0..m).map(|j| grad[j] * (s[j] - z[j])).sum();
        // concavity: optimum <= value + linearization gap
        best_bound = best_bound.min(val + gap.max(0.0));
        if gap.max(0.0) <= 1e-12 {
            break;
        }
        let step = 2.0 / (t as f64 + 2.0);
        for j in 0..m {
            z[j] += step * (s[j] - z[j]);
        }
    }
    CertifiedBound::new(best_value, best_bound.max(best_value), best_iterate)
}

/// Frank-Wolfe maximization of `logdet(A Diag(z) A^T + eps I)` over the
/// capped simplex `{z in [0,1]^m, sum z <= k}`. The certified bound is the
/// best `value + linearization gap` over the run, an upper bound on the
/// relaxation (and hence the binary) optimum.
pub fn dopt_boolean_relaxation(inst: &DoptInstance, iters: usize) -> Result<CertifiedBound> {
    inst.validate()?;
    let (n, m) = (inst.n(), inst.m());
    Ok(frank_wolfe(m, inst.k, iters, |z| {
        let info = inst.info_matrix(z);
        let eig = sym_eig(&info);
        let value: f64 = eig
            .values
            .iter()
            .map(|&l| (l.max(0.0) + inst.eps).ln())
            .sum();
        // gradient: a_j^T (M + eps I)^{-1} a_j
        let inv_vals: Vec<f64> = eig
            .values
            .iter()
            .map(|&l| 1.0 / (l.max(0.0) + inst.eps))
            .collect();
        let minv = eig.reconstruct_with(&inv_vals);
        let mut grad = vec![0.0; m];
        for j in 0..m {
            let col = inst.a.column(j);
            let mut acc = 0.0;
            for r in 0..n {
                for c in 0..n {
                    acc += col[r] * minv.entry(r, c) * col[c];
                }
            }
            grad[j] = acc;
        }
        (value, grad)
    }))
}

/// Separable concave maximization behind the spectral relaxation:
/// maximize `sum_i [y_i log(lam_i / y_i) + (1 - y_i) log(eps)]` over
/// `y in [0, 1]^n` with `sum y <= k`. Unconstrained coordinate maximizers
/// `lam_i / (e eps)` are clipped to `[0, 1]`; when their sum exceeds the
/// budget, the multiplier in `y(nu) = min(1, lam_i e^(-1-nu) / eps)` is
/// bisected until the budget binds.
pub fn waterfill_inner(lam: &[f64], k: usize, eps: f64) -> Result<(Vec<f64>, f64)> {
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    if lam.iter().any(|&l| l <= 0.0) {
        return Err(Error::invalid("eigenvalues must be positive (shifted spectrum)"));
    }
    let n = lam.len();
    let k = k.min(n);
    let y_at = |nu: f64| -> Vec<f64> {
        lam.iter()
            .map(|&l| (l * (-1.0 - nu).exp() / eps).min(1.0))
            .collect()
    };
    let budget = |y: &[f64]| -> f64 { y.iter().sum() };

    let mut y = y_at(0.0);
    if budget(&y) > k as f64 + 1e-10 {
        // bisect the multiplier until the budget constraint binds
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while budget(&y_at(hi)) > k as f64 {
            hi *= 2.0;
            if hi > 1e8 {
                break;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let s = budget(&y_at(mid));
            if s > k as f64 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (budget(&y_at(lo)) - k as f64).abs() <= 1e-10 {
                lo = if (budget(&y_at(lo)) - k as f64).abs()
                    < (budget(&y_at(hi)) - k as f64).abs()
                {
                    lo
                } else {
                    hi
                };
                break;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        // pick the bracket end that satisfies the budget
        y = y_at(hi);
        let y_lo = y_at(lo);
        if budget(&y_lo) <= k as f64 + 1e-10 {
            y = y_lo;
        }
    }
    let value = waterfill_value(lam, &y, eps);
    Ok((y, value))
}

fn waterfill_value(lam: &[f64], y: &[f64], eps: f64) -> f64 {
    lam.iter()
        .zip(y.iter())
        .map(|(&l, &yi)| {
            let active = if yi > 0.0 { yi * (l / yi).ln() } else { 0.0 };
            active + (1.0 - yi) * eps.ln()
        })
        .sum()
}

/// Frank-Wolfe maximization of the spectral relaxation value
/// (waterfilling over the shifted spectrum of the information matrix) on
/// `{z in [0,1]^m, sum z <= k}`, with supergradient coordinates
/// `sum_i (y_i / lam_i) (u_i^T a_j)^2`. Valid only in the underdetermined
/// regime `k < n`; every binary selection admits a rank-projector
/// certificate achieving the discrete objective, so the certified bound
/// upper-bounds the binary optimum.
pub fn dopt_mprt_relaxation(inst: &DoptInstance, iters: usize) -> Result<CertifiedBound> {
    inst.validate()?;
    let (n, m) = (inst.n(), inst.m());
    if inst.k >= n {
        return Err(Error::invalid(format!(
            "spectral relaxation needs k < n (got k = {}, n = {n})",
            inst.k
        )));
    }
    let mut scratch_err: Option<Error> = None;
    let out = frank_wolfe(m, inst.k, iters, |z| {
        let info = inst.info_matrix(z);
        let eig = sym_eig(&info);
        let lam: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0) + inst.eps).collect();
        let (y, value) = match waterfill_inner(&lam, inst.k, inst.eps) {
            Ok(r) => r,
            Err(e) => {
                scratch_err = Some(e);
                return (f64::NEG_INFINITY, vec![0.0; m]);
            }
        };
        let mut grad = vec![0.0; m];
        for j in 0..m {
            let col = inst.a.column(j);
            let mut acc = 0.0;
            for (i, (&l, &yi)) in lam.iter().zip(y.iter()).enumerate() {
                if yi == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for r in 0..n {
                    dot += eig.basis[(r, i)] * col[r];
                }
                acc += yi / l * dot * dot;
            }
            grad[j] = acc;
        }
        (value, grad)
    });
    match scratch_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
