//! Scalar and matrix perspective functions.
//!
//! The scalar perspective of a convex `omega` is `z * omega(x / z)` for
//! `z > 0`, closed with `0` at the origin and `+infinity` elsewhere on the
//! `z = 0` slice. Its matrix analog acts eigenvalue-by-eigenvalue on a
//! commuting PSD pair sharing an eigenbasis, and is `+infinity` off the
//! commuting manifold or when the first argument leaves the span of the
//! second.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::specfun::{sym_eig, symmetrize, ScalarFunctionSpec, SymMatrix};

/// A real value extended with a distinguished `+infinity` marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    fn from_eval(v: Option<f64>) -> Self {
        match v {
            Some(v) => ExtendedReal::Finite(v),
            None => ExtendedReal::PosInfinity,
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        assert!(!v.is_nan(), "extended reals exclude NaN");
        ExtendedReal::Finite(v)
    }
}

/// Scalar perspective `g_omega(x, z)`.
///
/// For `z > 0` this is `z * omega(x / z)` when `x / z` lies in the domain of
/// `omega` and `+infinity` otherwise; at `z = 0` it is `0` when `x = 0` and
/// `+infinity` otherwise. Negative `z` is rejected.
pub fn scalar_perspective(omega: &ScalarFunctionSpec, x: f64, z: f64) -> Result<ExtendedReal> {
    omega.validate()?;
    if z < 0.0 {
        return Err(Error::invalid(format!("perspective requires z >= 0, got {z}")));
    }
    Ok(scalar_perspective_value(omega, x, z))
}

/// Same as [`scalar_perspective`] with parameters assumed valid and `z >= 0`.
pub(crate) fn scalar_perspective_value(omega: &ScalarFunctionSpec, x: f64, z: f64) -> ExtendedReal {
    if z == 0.0 {
        if x == 0.0 {
            ExtendedReal::Finite(0.0)
        } else {
            ExtendedReal::PosInfinity
        }
    } else {
        ExtendedReal::from_eval(omega.eval(x / z).map(|v| z * v))
    }
}

/// A PSD pair diagonalized in one shared orthonormal basis.
///
/// Eigenvalues are paired column-by-column; pairing inside a degenerate
/// eigenspace of the second matrix re-diagonalizes the restriction of the
/// first, which is the only pairing consistent with the spectral formula for
/// the perspective.
#[derive(Debug, Clone)]
pub struct CommutingPair {
    /// Shared orthonormal basis.
    pub basis: DMatrix<f64>,
    /// Eigenvalues of the first matrix, aligned to `basis` columns.
    pub lam_x: Vec<f64>,
    /// Eigenvalues of the second matrix, descending, aligned to `basis`.
    pub lam_y: Vec<f64>,
}

impl CommutingPair {
    pub fn n(&self) -> usize {
        self.lam_y.len()
    }

    pub fn trace_x(&self) -> f64 {
        self.lam_x.iter().sum()
    }

    pub fn trace_y(&self) -> f64 {
        self.lam_y.iter().sum()
    }

    /// Indices where the first matrix has weight outside the span of the
    /// second: `lam_x[i] > span_tol` while `lam_y[i] <= span_tol`.
    pub fn span_violations(&self, span_tol: f64) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.lam_y[i] <= span_tol && self.lam_x[i].abs() > span_tol)
            .collect()
    }

    /// True when the first matrix lies in the span of the second.
    pub fn in_span(&self, span_tol: f64) -> bool {
        self.span_violations(span_tol).is_empty()
    }

    /// Default span tolerance, scaled by the leading eigenvalues.
    pub fn default_span_tol(&self) -> f64 {
        let scale = self
            .lam_x
            .iter()
            .chain(self.lam_y.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        1e-8 * (1.0 + scale)
    }
}

/// Default commutator tolerance, scaled by the two operator norms.
pub fn default_commute_tol(x: &SymMatrix, y: &SymMatrix) -> f64 {
    1e-8 * (1.0 + x.norm_fro() * y.norm_fro())
}

fn commutator_norm(x: &SymMatrix, y: &SymMatrix) -> f64 {
    let xy = x.as_matrix() * y.as_matrix();
    let yx = y.as_matrix() * x.as_matrix();
    (xy - yx).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Joint eigenbasis of a commuting pair. The caller has already verified the
/// commutator; degenerate eigenspaces of `y` are handled by re-diagonalizing
/// the restriction of `x` inside each eigenspace.
fn joint_eigenbasis(x: &SymMatrix, y: &SymMatrix) -> CommutingPair {
    let n = x.n();
    let eig_y = sym_eig(y);
    // cluster equal eigenvalues of y by gaps
    let cluster_tol = 1e-7 * (1.0 + eig_y.values[0].abs());
    let mut basis = DMatrix::zeros(n, n);
    let mut lam_x = vec![0.0; n];
    let mut lam_y = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eig_y.values[end - 1] - eig_y.values[end]).abs() <= cluster_tol {
            end += 1;
        }
        let d = end - start;
        let v_c = eig_y.basis.columns(start, d).into_owned();
        // diagonalize x restricted to this eigenspace
        let restricted = symmetrize(&(v_c.transpose() * x.as_matrix() * &v_c));
        let eig_r = sym_eig(&restricted);
        let u_c = &v_c * &eig_r.basis;
        for j in 0..d {
            basis.set_column(start + j, &u_c.column(j));
            lam_x[start + j] = eig_r.values[j];
            lam_y[start + j] = eig_y.values[start + j];
        }
        start = end;
    }
    CommutingPair { basis, lam_x, lam_y }
}

fn assert_psd_within(m: &SymMatrix, tol: f64, name: &str) -> Result<()> {
    let min = m.min_eig();
    if min < -tol {
        return Err(Error::invalid(format!(
            "{name} is not PSD within tolerance: min eigenvalue {min}"
        )));
    }
    Ok(())
}

/// Simultaneously diagonalizes a commuting PSD pair.
///
/// Fails with `NotCommuting` when the commutator exceeds `tol`
/// (default: [`default_commute_tol`]). A first matrix that leaves the span of
/// the second is not an error here; it is reported through the eigenvalue
/// flags on the returned pair.
pub fn simultaneous_diagonalize(
    x: &SymMatrix,
    y: &SymMatrix,
    tol: Option<f64>,
) -> Result<CommutingPair> {
    if x.n() != y.n() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.n(),
            y.n()
        )));
    }
    let tol = tol.unwrap_or_else(|| default_commute_tol(x, y));
    assert_psd_within(x, tol.max(1e-9), "first matrix")?;
    assert_psd_within(y, tol.max(1e-9), "second matrix")?;
    let comm = commutator_norm(x, y);
    if comm > tol {
        return Err(Error::NotCommuting(format!(
            "commutator norm {comm} exceeds tolerance {tol}"
        )));
    }
    Ok(joint_eigenbasis(x, y))
}

/// Result of a matrix perspective evaluation.
#[derive(Debug, Clone)]
pub enum MatrixPerspective {
    Value(SymMatrix),
    PosInfinity,
}

impl MatrixPerspective {
    pub fn value(self) -> Option<SymMatrix> {
        match self {
            MatrixPerspective::Value(v) => Some(v),
            MatrixPerspective::PosInfinity => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, MatrixPerspective::Value(_))
    }
}

/// Matrix perspective `g_f(X, Y)` of the spectral function generated by `f`.
///
/// Finite exactly when `Y` is PSD, the pair commutes, `X` lies in the span
/// of `Y`, and the per-eigenvalue ratios stay inside the domain of the
/// scalar function; every failure mode returns the `+infinity` marker.
pub fn matrix_perspective(
    f: &ScalarFunctionSpec,
    x: &SymMatrix,
    y: &SymMatrix,
) -> Result<MatrixPerspective> {
    f.validate()?;
    if x.n() != y.n() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let tol = default_commute_tol(x, y);
    if y.min_eig() < -tol.max(1e-9) {
        return Ok(MatrixPerspective::PosInfinity);
    }
    if commutator_norm(x, y) > tol {
        return Ok(MatrixPerspective::PosInfinity);
    }
    let pair = joint_eigenbasis(x, y);
    let span_tol = pair.default_span_tol();
    let mut vals = Vec::with_capacity(pair.n());
    for i in 0..pair.n() {
        let (lx, ly) = (pair.lam_x[i], pair.lam_y[i]);
        let v = if ly <= span_tol {
            if lx.abs() <= span_tol {
                ExtendedReal::Finite(0.0)
            } else {
                ExtendedReal::PosInfinity
            }
        } else {
            scalar_perspective_value(f, lx, ly)
        };
        match v {
            ExtendedReal::Finite(v) => vals.push(v),
            ExtendedReal::PosInfinity => return Ok(MatrixPerspective::PosInfinity),
        }
    }
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&vals));
    let m = &pair.basis * d * pair.basis.transpose();
    Ok(MatrixPerspective::Value(symmetrize(&m)))
}

/// Trace of the matrix perspective plus the rank penalty and the
/// zero-eigenvalue correction:
/// `sum_i g_omega(lam_x_i, lam_y_i) + mu * tr(Y) + (n - tr(Y)) * omega(0)`.
///
/// For the concave `EpsLog` evaluator, coordinates with `lam_y = 0`
/// contribute `0` regardless of `lam_x` (the span-restricted sandwich
/// reading of the perspective on shifted spectra); every other catalog
/// entry propagates `+infinity` off the span.
pub fn trace_matrix_perspective(
    omega: &ScalarFunctionSpec,
    pair: &CommutingPair,
    mu: f64,
    with_omega0_correction: bool,
) -> Result<ExtendedReal> {
    omega.validate()?;
    let span_tol = pair.default_span_tol();
    let eps_log = omega.is_concave();
    let mut total = 0.0;
    for i in 0..pair.n() {
        let (lx, ly) = (pair.lam_x[i], pair.lam_y[i]);
        let v = if ly <= span_tol {
            if eps_log || lx.abs() <= span_tol {
                ExtendedReal::Finite(0.0)
            } else {
                ExtendedReal::PosInfinity
            }
        } else {
            scalar_perspective_value(omega, lx, ly)
        };
        match v {
            ExtendedReal::Finite(v) => total += v,
            ExtendedReal::PosInfinity => return Ok(ExtendedReal::PosInfinity),
        }
    }
    let tr_y = pair.trace_y();
    total += mu * tr_y;
    if with_omega0_correction {
        total += (pair.n() as f64 - tr_y) * omega.omega0();
    }
    Ok(ExtendedReal::Finite(total))
}

/// Epigraph transform test for positive definite `Y`:
/// `(Y^{-1/2} X Y^{-1/2}, Y^{-1/2} theta Y^{-1/2})` lies in `epi(f)` iff
/// `g_f(X, Y) <= theta`, so this checks the congruence-transformed pair
/// directly.
pub fn epigraph_transform_check(
    f: &ScalarFunctionSpec,
    x: &SymMatrix,
    y: &SymMatrix,
    theta: &SymMatrix,
    tol: f64,
) -> Result<bool> {
    f.validate()?;
    if x.n() != y.n() || theta.n() != y.n() {
        return Err(Error::invalid("dimension mismatch"));
    }
    let eig_y = sym_eig(y);
    if eig_y.values[eig_y.n() - 1] <= tol {
        return Err(Error::invalid(format!(
            "Y must be positive definite beyond tol: min eigenvalue {}",
            eig_y.values[eig_y.n() - 1]
        )));
    }
    let inv_sqrt: Vec<f64> = eig_y.values.iter().map(|&l| 1.0 / l.sqrt()).collect();
    let y_inv_sqrt = eig_y.reconstruct_with(&inv_sqrt);
    let a = symmetrize(&(y_inv_sqrt.as_matrix() * x.as_matrix() * y_inv_sqrt.as_matrix()));
    let t = symmetrize(&(y_inv_sqrt.as_matrix() * theta.as_matrix() * y_inv_sqrt.as_matrix()));
    let fa = match crate::specfun::spectral_apply(&a, |l| f.eval(l)) {
        Ok(m) => m,
        Err(Error::Domain(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    Ok(t.sub(&fa).min_eig() >= -tol)
}
