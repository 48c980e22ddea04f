//! Membership oracles for convex hulls of low-rank spectral sets.
//!
//! Four oracles: the hull of a spectral sublevel set under a rank bound
//! (trace-perspective test over a commuting pair), the hull of the
//! bounded quadratic-epigraph set (Schur block test), its weighted
//! multi-block composition, and the scalar convex closure of the
//! power-residual set with an indicator, evaluated through a
//! one-dimensional convex minimization.

use crate::error::{Error, Result};
use crate::perspective::{simultaneous_diagonalize, trace_matrix_perspective, ExtendedReal};
use crate::specfun::{assemble_block, ScalarFunctionSpec, SymMatrix};

/// Outcome of a membership query.
#[derive(Debug, Clone)]
pub struct HullQueryResult {
    pub member: bool,
    /// Signed slack of the binding inequality (negative infinity when a
    /// hard gate such as commutation fails).
    pub margin: f64,
    /// Identifier of the violated or binding condition.
    pub witness: Option<String>,
}

impl HullQueryResult {
    fn from_slacks(slacks: Vec<(&'static str, f64)>, tol: f64) -> Self {
        let (witness, margin) = slacks
            .into_iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("at least one condition");
        HullQueryResult {
            member: margin >= -tol,
            margin,
            witness: Some(witness.to_string()),
        }
    }

    fn hard_failure(witness: &str) -> Self {
        HullQueryResult {
            member: false,
            margin: f64::NEG_INFINITY,
            witness: Some(witness.to_string()),
        }
    }
}

/// Membership in the convex hull of
/// `{X psd : sum_i omega(lambda_i(X)) + mu rank(X) <= t, rank(X) <= k}`,
/// lifted with the hull of trace-k projectors: member iff `X >= 0`,
/// `0 <= Y <= I`, `tr(Y) <= k`, the pair commutes with `X` in the span of
/// `Y`, and the corrected trace perspective is at most `t`.
pub fn hull_membership_t(
    x: &SymMatrix,
    y: &SymMatrix,
    t: f64,
    omega: &ScalarFunctionSpec,
    mu: f64,
    k: usize,
    tol: f64,
) -> Result<HullQueryResult> {
    omega.validate()?;
    if x.n() != y.n() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let mut slacks = vec![
        ("x_psd", x.min_eig()),
        ("y_psd", y.min_eig()),
        ("y_below_identity", SymMatrix::identity(y.n()).sub(y).min_eig()),
        ("trace_budget", k as f64 - y.trace()),
    ];
    if slacks.iter().any(|&(_, s)| s < -tol) {
        return Ok(HullQueryResult::from_slacks(slacks, tol));
    }
    let pair = match simultaneous_diagonalize(x, y, None) {
        Ok(p) => p,
        Err(Error::NotCommuting(_)) => {
            return Ok(HullQueryResult::hard_failure("not_commuting"))
        }
        Err(e) => return Err(e),
    };
    match trace_matrix_perspective(omega, &pair, mu, true)? {
        ExtendedReal::Finite(v) => slacks.push(("perspective_level", t - v)),
        ExtendedReal::PosInfinity => {
            return Ok(HullQueryResult::hard_failure("perspective_infinite"))
        }
    }
    Ok(HullQueryResult::from_slacks(slacks, tol))
}

/// Membership in the hull of the bounded quadratic-epigraph set:
/// member iff `Y <= I`, `tr(Y) <= k`, `u Y >= X >= l Y`, and
/// `[[Y, X], [X^T, theta]] >= -tol I`.
pub fn hull_membership_s(
    y: &SymMatrix,
    x: &SymMatrix,
    theta: &SymMatrix,
    l: f64,
    u: f64,
    k: usize,
    tol: f64,
) -> Result<HullQueryResult> {
    if l > u {
        return Err(Error::invalid(format!("need l <= u, got {l} > {u}")));
    }
    if x.n() != y.n() || theta.n() != y.n() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let n = y.n();
    let block = assemble_block(y, x.as_matrix(), theta)?;
    let slacks = vec![
        ("y_below_identity", SymMatrix::identity(n).sub(y).min_eig()),
        ("trace_budget", k as f64 - y.trace()),
        ("upper_bound", y.scale(u).sub(x).min_eig()),
        ("lower_bound", x.sub(&y.scale(l)).min_eig()),
        ("schur_block", block.min_eig()),
    ];
    Ok(HullQueryResult::from_slacks(slacks, tol))
}

/// Per-block data for the weighted composition oracle.
#[derive(Debug, Clone)]
pub struct QBlock {
    pub x: SymMatrix,
    pub y: SymMatrix,
    pub theta: SymMatrix,
    pub l: f64,
    pub u: f64,
    pub k: usize,
}

/// Membership in the weighted multi-block hull: `rho` must dominate the
/// weighted sum of the epigraph traces and every block must pass the
/// single-block test.
pub fn hull_membership_q(
    rho: f64,
    blocks: &[QBlock],
    weights: &[f64],
    tol: f64,
) -> Result<HullQueryResult> {
    if blocks.len() != weights.len() {
        return Err(Error::invalid("one weight per block required"));
    }
    if weights.iter().any(|&q| q < 0.0) {
        return Err(Error::invalid("weights must be nonnegative"));
    }
    let mut margin = f64::INFINITY;
    let mut witness = "rho_budget".to_string();
    let weighted_sum: f64 = blocks
        .iter()
        .zip(weights.iter())
        .map(|(b, &q)| q * b.theta.trace())
        .sum();
    let rho_slack = rho - weighted_sum;
    if rho_slack < margin {
        margin = rho_slack;
    }
    for (i, b) in blocks.iter().enumerate() {
        let r = hull_membership_s(&b.y, &b.x, &b.theta, b.l, b.u, b.k, tol)?;
        if r.margin < margin {
            margin = r.margin;
            witness = format!("block_{i}_{}", r.witness.unwrap_or_default());
        }
    }
    Ok(HullQueryResult {
        member: margin >= -tol,
        margin,
        witness: Some(witness),
    })
}

/// Perspective of `|w|^q`: `|w|^q / s^(q-1)` for `s > 0`, with the
/// homogeneous case `q = 1` collapsing to `|w|` and the `s = 0` slice equal
/// to `0` at `w = 0` and infinite elsewhere.
fn power_perspective(w: f64, s: f64, q: f64) -> f64 {
    if q == 1.0 {
        return w.abs();
    }
    if s > 0.0 {
        w.abs().powf(q) / s.powf(q - 1.0)
    } else if w.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Inner objective of the scalar closure at a fixed blending variable.
fn closure_objective(beta: f64, x: f64, y: f64, z: f64, d: f64, q: f64) -> f64 {
    power_perspective(y - beta - d * (1.0 - z), 1.0 - z, q)
        + power_perspective(x + beta - d * z, z, q)
}

/// Minimizes the convex coercive inner objective over the blending
/// variable by ternary search on a bracket guaranteed to contain the
/// minimizer.
fn minimize_inner(x: f64, y: f64, z: f64, d: f64, q: f64) -> f64 {
    let bound_tol = 1e-12;
    if z <= bound_tol {
        // the second perspective forces x + beta = 0; combined with the
        // indicator this pins beta = 0
        return if x.abs() <= 1e-9 {
            closure_objective(0.0, 0.0, y, 0.0, d, q)
        } else {
            f64::INFINITY
        };
    }
    if z >= 1.0 - bound_tol {
        // the first perspective forces beta = y
        return closure_objective(y, x, y, 1.0, d, q);
    }
    let r = 10.0 * (x.abs() + y.abs() + d.abs() + 1.0);
    let (mut lo, mut hi) = (-r, r);
    while hi - lo > 1e-9 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if closure_objective(m1, x, y, z, d, q) <= closure_objective(m2, x, y, z, d, q) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    closure_objective(0.5 * (lo + hi), x, y, z, d, q)
}

/// Level function of the scalar closure: the smallest `t` for which
/// `(x, y, z, t)` belongs, or `None` when no level does (`z` outside
/// `[0, 1]` or `|x|` beyond the scaled bound).
pub fn scalar_closure_level(
    x: f64,
    y: f64,
    z: f64,
    d: f64,
    q: f64,
    m_bound: f64,
) -> Option<f64> {
    if !(-1e-9..=1.0 + 1e-9).contains(&z) || x.abs() > m_bound * z + 1e-9 {
        return None;
    }
    let inner = minimize_inner(x, y, z.clamp(0.0, 1.0), d, q);
    inner.is_finite().then_some(inner)
}

/// Membership in the convex closure of
/// `{(x, y, z, t) : t >= |x + y - d|^q, |x| <= M, z binary, x = 0 if z = 0}`:
/// member iff `z in [0, 1]`, `|x| <= M z`, and the inner minimum of the two
/// power perspectives stays at or below `t`.
#[allow(clippy::too_many_arguments)]
pub fn scalar_closure_membership(
    x: f64,
    y: f64,
    z: f64,
    t: f64,
    d: f64,
    q: f64,
    m_bound: f64,
    tol: f64,
) -> Result<HullQueryResult> {
    if q < 1.0 {
        return Err(Error::invalid("power must satisfy q >= 1"));
    }
    if m_bound <= 0.0 {
        return Err(Error::invalid("spectral bound must be positive"));
    }
    let mut slacks = vec![
        ("z_lower", z),
        ("z_upper", 1.0 - z),
        ("big_m", m_bound * z - x.abs()),
        ("t_nonneg", t),
    ];
    let clamped_z = z.clamp(0.0, 1.0);
    let inner = minimize_inner(x, y, clamped_z, d, q);
    if inner.is_finite() {
        slacks.push(("level", t - inner));
        Ok(HullQueryResult::from_slacks(slacks, tol))
    } else if slacks.iter().any(|&(_, s)| s < -tol) {
        Ok(HullQueryResult::from_slacks(slacks, tol))
    } else {
        Ok(HullQueryResult::hard_failure("level_infinite"))
    }
}
