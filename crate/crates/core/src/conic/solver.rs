//! Operator-splitting solver for standard-form conic programs.
//!
//! The splitting alternates an affine projection (KKT solve against the
//! constant matrix `I + A^T A`, factored once) with a cone projection,
//! with over-relaxation 1.5 and a fixed penalty that is rebalanced from
//! the primal/dual residual ratio every 50 iterations. Problem data is
//! Ruiz-equilibrated first (uniformly per cone block on the non-polyhedral
//! blocks, so block scaling preserves the cones); termination is measured
//! on the original, unscaled data.

use nalgebra::{Cholesky, DVector, Dyn};

use super::{project_cone, project_dual_cone, ConeBlock, ConicProblem};
use crate::error::{Error, Result};

/// Solver settings. Everything is deterministic; there is no seed.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Relative tolerance on primal/dual residuals and the duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty parameter.
    pub rho: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol: 1e-6,
            max_iter: 50_000,
            rho: 1.0,
            alpha: 1.5,
        }
    }
}

impl SolveSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolveSettings {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

/// Primal/dual solution with KKT residuals measured on the original data.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub status: SolveStatus,
    pub primal_res: f64,
    pub dual_res: f64,
    /// Signed duality gap `c^T x + b^T y`.
    pub gap: f64,
    pub iterations: usize,
    /// `c^T x + obj_const`.
    pub objective: f64,
    /// `-b^T y + obj_const`; lower bound on the optimum at dual feasibility.
    pub dual_objective: f64,
}

const CHECK_EVERY: usize = 25;
const BALANCE_EVERY: usize = 50;
const RUIZ_ITERS: usize = 10;
const CERT_TOL: f64 = 1e-7;

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    sigma_b: f64,
    sigma_c: f64,
}

/// Ruiz equilibration with blockwise-uniform row scaling on SOC/RSOC/PSD
/// blocks (so the scaled slack cone is the same product cone).
fn equilibrate(p: &ConicProblem) -> (super::SparseMatrix, DVector<f64>, DVector<f64>, Scaling) {
    let (m, n) = (p.num_rows(), p.num_vars());
    let mut a = p.a.clone();
    let mut d = vec![1.0f64; m];
    let mut e = vec![1.0f64; n];
    for _ in 0..RUIZ_ITERS {
        let mut dr = a.row_inf_norms();
        // uniform scaling inside non-polyhedral blocks
        for (off, block) in p.cones.iter_offsets() {
            let len = block.len();
            match block {
                ConeBlock::Zero(_) | ConeBlock::NonNeg(_) => {}
                _ => {
                    let mx = dr[off..off + len].iter().fold(0.0f64, |acc, v| acc.max(*v));
                    dr[off..off + len].iter_mut().for_each(|v| *v = mx);
                }
            }
        }
        let dc = a.col_inf_norms();
        let dr: Vec<f64> = dr
            .iter()
            .map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        let dc: Vec<f64> = dc
            .iter()
            .map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        a.scale(&dr, &dc);
        for i in 0..m {
            d[i] *= dr[i];
        }
        for j in 0..n {
            e[j] *= dc[j];
        }
    }
    let mut b = DVector::zeros(m);
    for i in 0..m {
        b[i] = p.b[i] * d[i];
    }
    let mut c = DVector::zeros(n);
    for j in 0..n {
        c[j] = p.c[j] * e[j];
    }
    let sigma_b = {
        let nb = b.amax();
        if nb > 1e-12 {
            1.0 / nb
        } else {
            1.0
        }
    };
    let sigma_c = {
        let nc = c.amax();
        if nc > 1e-12 {
            1.0 / nc
        } else {
            1.0
        }
    };
    b *= sigma_b;
    c *= sigma_c;
    (a, b, c, Scaling { d, e, sigma_b, sigma_c })
}

struct Unscaled {
    x: DVector<f64>,
    y: DVector<f64>,
    s: DVector<f64>,
    primal_res: f64,
    dual_res: f64,
    gap: f64,
    gap_ok: bool,
}

fn unscaled_kkt(
    p: &ConicProblem,
    scaling: &Scaling,
    xs: &DVector<f64>,
    ys: &DVector<f64>,
    ss: &DVector<f64>,
    tol: f64,
) -> Unscaled {
    let (m, n) = (p.num_rows(), p.num_vars());
    let mut x = DVector::zeros(n);
    for j in 0..n {
        x[j] = scaling.e[j] * xs[j] / scaling.sigma_b;
    }
    let mut y = DVector::zeros(m);
    let mut s = DVector::zeros(m);
    for i in 0..m {
        y[i] = scaling.d[i] * ys[i] / scaling.sigma_c;
        s[i] = ss[i] / (scaling.d[i] * scaling.sigma_b);
    }
    let mut ax = DVector::zeros(m);
    p.a.mul_vec(&x, &mut ax);
    let mut aty = DVector::zeros(n);
    p.a.mul_t_vec(&y, &mut aty);
    let rp_num = (0..m)
        .map(|i| (ax[i] + s[i] - p.b[i]).abs())
        .fold(0.0f64, f64::max);
    let rp_den = 1.0 + ax.amax().max(s.amax()).max(p.b.amax());
    let rd_num = (0..n).map(|j| (p.c[j] + aty[j]).abs()).fold(0.0f64, f64::max);
    let rd_den = 1.0 + p.c.amax().max(aty.amax());
    let pv = p.c.dot(&x);
    let dv = p.b.dot(&y);
    let gap = pv + dv;
    Unscaled {
        x,
        y,
        s,
        primal_res: rp_num / rp_den,
        dual_res: rd_num / rd_den,
        gap,
        gap_ok: gap.abs() <= tol * (1.0 + pv.abs()),
    }
}

/// Solves a conic program. Deterministic for fixed input.
pub fn solve(p: &ConicProblem, settings: &SolveSettings) -> Result<Solution> {
    p.validate()?;
    if settings.tol <= 0.0 || settings.max_iter == 0 {
        return Err(Error::invalid("tol must be positive and max_iter nonzero"));
    }
    let (a, b, c, scaling) = equilibrate(p);
    let (m, n) = (p.num_rows(), p.num_vars());

    let gram = a.identity_plus_gram();
    let chol = Cholesky::<f64, Dyn>::new(gram)
        .ok_or_else(|| Error::invalid("normal matrix is not positive definite"))?;

    let mut rho = settings.rho;
    let alpha = settings.alpha;

    let mut x = DVector::<f64>::zeros(n);
    let mut st = b.clone();
    project_cone(&mut st, &p.cones);
    let mut y = DVector::<f64>::zeros(m);

    // checkpoint state for infeasibility certificates
    let mut x_prev_check = x.clone();
    let mut y_prev_check = y.clone();

    let mut d_vec = DVector::<f64>::zeros(m);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut atd = DVector::<f64>::zeros(n);
    let mut ax = DVector::<f64>::zeros(m);

    let mut best: Option<Unscaled> = None;
    let mut iterations = 0;

    for iter in 0..settings.max_iter {
        iterations = iter + 1;

        // affine half-step: (I + A^T A) xhat = x - c/rho + A^T (b - st - y/rho)
        for i in 0..m {
            d_vec[i] = b[i] - st[i] - y[i] / rho;
        }
        a.mul_t_vec(&d_vec, &mut atd);
        for j in 0..n {
            rhs[j] = x[j] - c[j] / rho + atd[j];
        }
        chol.solve_mut(&mut rhs);
        let xhat = &rhs;
        a.mul_vec(xhat, &mut ax);

        // over-relaxed consensus and cone projection
        for j in 0..n {
            x[j] = alpha * xhat[j] + (1.0 - alpha) * x[j];
        }
        let mut v = DVector::<f64>::zeros(m);
        for i in 0..m {
            let s_aff = b[i] - ax[i];
            let s_or = alpha * s_aff + (1.0 - alpha) * st[i];
            v[i] = s_or - y[i] / rho;
            // stash s_or in d_vec for the dual update
            d_vec[i] = s_or;
        }
        project_cone(&mut v, &p.cones);
        for i in 0..m {
            y[i] += rho * (v[i] - d_vec[i]);
        }
        st = v;

        let last = iter + 1 == settings.max_iter;
        if (iter + 1) % CHECK_EVERY == 0 || last {
            let u = unscaled_kkt(p, &scaling, &x, &y, &st, settings.tol);
            let converged =
                u.primal_res <= settings.tol && u.dual_res <= settings.tol && u.gap_ok;
            let better = match &best {
                None => true,
                Some(bst) => {
                    u.primal_res.max(u.dual_res) < bst.primal_res.max(bst.dual_res)
                }
            };
            if better || converged {
                best = Some(u);
            }
            if converged {
                let u = best.unwrap();
                return Ok(finish(p, u, SolveStatus::Optimal, iterations));
            }

            // infeasibility certificates on the scaled data
            if iter > 100 {
                let dy = &y - &y_prev_check;
                for cand in [&y, &dy] {
                    if let Some(status) = primal_infeasibility(&a, &b, cand, &p.cones) {
                        let u = unscaled_kkt(p, &scaling, &x, &y, &st, settings.tol);
                        return Ok(finish(p, u, status, iterations));
                    }
                }
                let dx = &x - &x_prev_check;
                for cand in [&x, &dx] {
                    if let Some(status) = dual_infeasibility(&a, &c, cand, &p.cones) {
                        let u = unscaled_kkt(p, &scaling, &x, &y, &st, settings.tol);
                        return Ok(finish(p, u, status, iterations));
                    }
                }
            }
            x_prev_check.copy_from(&x);
            y_prev_check.copy_from(&y);
        }

        if (iter + 1) % BALANCE_EVERY == 0 {
            // scaled residuals for penalty balancing
            a.mul_vec(&x, &mut ax);
            let rp = (0..m)
                .map(|i| (ax[i] + st[i] - b[i]).abs())
                .fold(0.0f64, f64::max)
                / (1.0 + ax.amax().max(st.amax()).max(b.amax()));
            a.mul_t_vec(&y, &mut atd);
            let rd = (0..n).map(|j| (c[j] + atd[j]).abs()).fold(0.0f64, f64::max)
                / (1.0 + c.amax().max(atd.amax()));
            if rp > 10.0 * rd && rho < 1e8 {
                rho *= 2.0;
            } else if rd > 10.0 * rp && rho > 1e-6 {
                rho /= 2.0;
            }
        }
    }

    let u = best.unwrap_or_else(|| unscaled_kkt(p, &scaling, &x, &y, &st, settings.tol));
    Ok(finish(p, u, SolveStatus::MaxIter, iterations))
}

fn finish(p: &ConicProblem, u: Unscaled, status: SolveStatus, iterations: usize) -> Solution {
    let pv = p.c.dot(&u.x);
    let dv = p.b.dot(&u.y);
    Solution {
        objective: pv + p.obj_const,
        dual_objective: -dv + p.obj_const,
        x: u.x,
        y: u.y,
        s: u.s,
        status,
        primal_res: u.primal_res,
        dual_res: u.dual_res,
        gap: u.gap,
        iterations,
    }
}

/// `y` with `A^T y ~ 0`, `y in K*`, `b^T y < 0` certifies primal infeasibility.
fn primal_infeasibility(
    a: &super::SparseMatrix,
    b: &DVector<f64>,
    cand: &DVector<f64>,
    cones: &super::ConeSpec,
) -> Option<SolveStatus> {
    let nrm = cand.amax();
    if nrm < 1e-9 {
        return None;
    }
    let mut u = cand / nrm;
    u = project_dual_cone(&u, cones);
    let nrm2 = u.amax();
    if nrm2 < 1e-9 {
        return None;
    }
    u /= nrm2;
    let mut atu = DVector::zeros(a.ncols);
    a.mul_t_vec(&u, &mut atu);
    if atu.amax() <= CERT_TOL && b.dot(&u) < -CERT_TOL {
        Some(SolveStatus::Infeasible)
    } else {
        None
    }
}

/// `x` with `-A x in K`, `c^T x < 0` certifies unboundedness below.
fn dual_infeasibility(
    a: &super::SparseMatrix,
    c: &DVector<f64>,
    cand: &DVector<f64>,
    cones: &super::ConeSpec,
) -> Option<SolveStatus> {
    let nrm = cand.amax();
    if nrm < 1e-9 {
        return None;
    }
    let u = cand / nrm;
    if c.dot(&u) >= -CERT_TOL {
        return None;
    }
    let mut au = DVector::zeros(a.nrows);
    a.mul_vec(&u, &mut au);
    au = -au;
    let mut proj = au.clone();
    project_cone(&mut proj, cones);
    if (&proj - &au).amax() <= CERT_TOL {
        Some(SolveStatus::Unbounded)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{svec, ConeBlock, ConeSpec, SparseMatrix};
    use crate::specfun::SymMatrix;
    use approx::assert_abs_diff_eq;

    fn lp(
        c: &[f64],
        trips: &[(usize, usize, f64)],
        b: &[f64],
        cones: Vec<ConeBlock>,
    ) -> ConicProblem {
        ConicProblem {
            c: DVector::from_column_slice(c),
            a: SparseMatrix::from_triplets(b.len(), c.len(), trips).unwrap(),
            b: DVector::from_column_slice(b),
            cones: ConeSpec::new(cones).unwrap(),
            obj_const: 0.0,
        }
    }

    #[test]
    fn min_x_with_lower_bound() {
        // min x s.t. x - 1 >= 0
        let p = lp(&[1.0], &[(0, 0, -1.0)], &[-1.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn equality_and_box() {
        // min -x - 2z s.t. x + z = 1, x >= 0, z >= 0 -> optimum -2 at (0, 1)
        let p = lp(
            &[-1.0, -2.0],
            &[
                (0, 0, 1.0),
                (0, 1, 1.0),
                (1, 0, -1.0),
                (2, 1, -1.0),
            ],
            &[1.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)],
        );
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn psd_trace_minimization() {
        // min tr(X) s.t. X - I psd (n = 3): slack = svec(X) - svec(I)
        let n = 3;
        let len = crate::conic::svec_len(n);
        let mut trips = Vec::new();
        let mut c = vec![0.0; len];
        for j in 0..n {
            for i in 0..=j {
                let k = crate::conic::svec_index(i, j);
                trips.push((k, k, -1.0));
                if i == j {
                    c[k] = 1.0;
                }
            }
        }
        let b = -svec(&SymMatrix::identity(n));
        let p = ConicProblem {
            c: DVector::from_column_slice(&c),
            a: SparseMatrix::from_triplets(len, len, &trips).unwrap(),
            b,
            cones: ConeSpec::new(vec![ConeBlock::Psd(n)]).unwrap(),
            obj_const: 0.0,
        };
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 3e-5);
    }

    #[test]
    fn rotated_cone_quadratic_epigraph() {
        // min t s.t. 2 * t * 1 >= x^2, x = 3  ->  t = 4.5
        // variables (t, x); rsoc slack (t, 1, x)
        let p = lp(
            &[1.0, 0.0],
            &[(0, 0, -1.0), (2, 1, -1.0), (3, 1, 1.0)],
            &[0.0, 1.0, 0.0, 3.0],
            vec![ConeBlock::RotatedSecondOrder(3), ConeBlock::Zero(1)],
        );
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 4.5, epsilon = 1e-4);
    }

    #[test]
    fn soc_norm_bound() {
        // min -x1 - x2 s.t. ||(x1, x2)|| <= 1 -> -sqrt(2)
        let p = lp(
            &[-1.0, -1.0],
            &[(1, 0, -1.0), (2, 1, -1.0)],
            &[1.0, 0.0, 0.0],
            vec![ConeBlock::SecondOrder(3)],
        );
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -std::f64::consts::SQRT_2, epsilon = 1e-5);
    }

    #[test]
    fn detects_infeasible() {
        // x >= 1 and -x >= 0 simultaneously
        let p = lp(
            &[0.0],
            &[(0, 0, -1.0), (1, 0, 1.0)],
            &[-1.0, 0.0],
            vec![ConeBlock::NonNeg(2)],
        );
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min x s.t. -x >= 0 (x <= 0, objective unbounded below)
        let p = lp(&[1.0], &[(0, 0, 1.0)], &[0.0], vec![ConeBlock::NonNeg(1)]);
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic_across_runs() {
        let p = lp(
            &[-1.0, -2.0],
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, -1.0)],
            &[1.0, 0.0, 0.0],
            vec![ConeBlock::Zero(1), ConeBlock::NonNeg(2)],
        );
        let s1 = solve(&p, &SolveSettings::default()).unwrap();
        let s2 = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(s1.x.as_slice(), s2.x.as_slice());
        assert_eq!(s1.iterations, s2.iterations);
    }

    #[test]
    fn duality_gap_small_at_optimal() {
        let p = lp(
            &[1.0, 1.0],
            &[(0, 0, -1.0), (1, 1, -1.0), (2, 0, -1.0), (2, 1, -2.0)],
            &[0.0, 0.0, -4.0],
            vec![ConeBlock::NonNeg(3)],
        );
        let sol = solve(&p, &SolveSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.gap.abs() <= 1e-6 * (1.0 + sol.objective.abs()));
        // min x+y s.t. x >= 0, y >= 0, x + 2y >= 4 -> optimum 2 at (0, 2)
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-5);
    }
}
