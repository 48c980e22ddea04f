//! Dense symmetric linear algebra and matrix-function calculus.
//!
//! Everything here acts through eigendecompositions of real symmetric
//! matrices: applying scalar functions to spectra, pseudoinverses, the
//! pseudo log-determinant, sums of leading eigenvalues, and the
//! generalized Schur complement feasibility test for block matrices with
//! singular diagonal blocks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A real symmetric matrix with exact entrywise symmetry.
///
/// Symmetry is enforced at construction by averaging `(a_ij + a_ji) / 2`,
/// so downstream spectral routines never see asymmetric round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from a square matrix, symmetrizing exactly.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::invalid(format!(
                "expected a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite entries"));
        }
        let mut data = a.clone();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                data[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        Ok(SymMatrix { data })
    }

    /// Builds from a closure over `(i, j)`; the result is symmetrized.
    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        SymMatrix::new(DMatrix::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix {
            data: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// Frobenius inner product `tr(self * other)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.norm()
    }

    /// Smallest eigenvalue; convenience for semidefiniteness tests.
    pub fn min_eig(&self) -> f64 {
        let eig = sym_eig(self);
        *eig.values.as_slice().last().unwrap()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            data: &self.data * s,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data - &other.data,
        }
    }
}

/// Symmetrizes an arbitrary square matrix: `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> SymMatrix {
    let sym = 0.5 * (m + m.transpose());
    SymMatrix { data: sym }
}

/// An orthonormal eigenbasis with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Orthonormal basis; column `i` pairs with `values[i]`.
    pub basis: DMatrix<f64>,
    /// Eigenvalues, `values[0] >= values[1] >= ...`.
    pub values: DVector<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Reassembles `U Diag(vals) U^T` for an arbitrary replacement spectrum.
    pub fn reconstruct_with(&self, vals: &[f64]) -> SymMatrix {
        let n = self.n();
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(vals));
        let m = &self.basis * d * self.basis.transpose();
        debug_assert_eq!(m.nrows(), n);
        symmetrize(&m)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(self.values.as_slice())
    }
}

/// Eigendecomposition of a symmetric matrix with descending eigenvalue order.
pub fn sym_eig(x: &SymMatrix) -> EigenDecomposition {
    let se = x.data.clone().symmetric_eigen();
    let n = x.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut basis = DMatrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &se.eigenvectors.column(src));
        values[dst] = se.eigenvalues[src];
    }
    EigenDecomposition { basis, values }
}

/// Applies a scalar function to the spectrum: `U Diag(f(lambda_i)) U^T`.
///
/// `f` returns `None` outside its domain, which maps to a domain error.
pub fn spectral_apply(x: &SymMatrix, f: impl Fn(f64) -> Option<f64>) -> Result<SymMatrix> {
    let eig = sym_eig(x);
    let mut vals = Vec::with_capacity(eig.n());
    for (i, &lam) in eig.values.iter().enumerate() {
        match f(lam) {
            Some(v) => vals.push(v),
            None => {
                return Err(Error::domain(format!(
                    "eigenvalue {lam} (index {i}) outside the scalar function's domain"
                )))
            }
        }
    }
    Ok(eig.reconstruct_with(&vals))
}

/// Matrix exponential of a symmetric matrix.
pub fn mexp(x: &SymMatrix) -> SymMatrix {
    spectral_apply(x, |l| Some(l.exp())).expect("exp is total")
}

/// Matrix logarithm; requires eigenvalues above `-CLAMP_NEG` (round-off slack).
pub fn mlog(x: &SymMatrix) -> Result<SymMatrix> {
    spectral_apply(x, |l| {
        let l = clamp_psd_eigenvalue(l)?;
        if l > 0.0 {
            Some(l.ln())
        } else {
            None
        }
    })
}

/// Matrix square root of a nominally PSD matrix.
pub fn msqrt(x: &SymMatrix) -> Result<SymMatrix> {
    spectral_apply(x, |l| clamp_psd_eigenvalue(l).map(|v| v.sqrt()))
}

/// Round-off slack below zero tolerated on nominally PSD inputs.
pub const PSD_CLAMP: f64 = 1e-10;

/// Clamps a slightly negative eigenvalue to zero; larger negativity is a
/// domain violation rather than round-off.
fn clamp_psd_eigenvalue(l: f64) -> Option<f64> {
    if l >= 0.0 {
        Some(l)
    } else if l >= -PSD_CLAMP {
        Some(0.0)
    } else {
        None
    }
}

/// Moore-Penrose pseudoinverse through the eigendecomposition.
///
/// Eigenvalues with `|lambda| > rank_tol` are inverted, the rest are zeroed.
/// The default tolerance is `1e-9 * max(lambda_1, 1)`, which thresholds
/// relative to the dominant eigenvalue instead of inverting numerical noise.
pub fn pinv(x: &SymMatrix, rank_tol: Option<f64>) -> Result<SymMatrix> {
    let eig = sym_eig(x);
    let tol = match rank_tol {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(Error::invalid(format!("rank_tol must be >= 0, got {t}"))),
        None => 1e-9 * eig.values[0].max(1.0),
    };
    let vals: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l.abs() > tol { 1.0 / l } else { 0.0 })
        .collect();
    Ok(eig.reconstruct_with(&vals))
}

/// Pseudo log-determinant `sum_i log(max(lambda_i, 0) + eps)`.
///
/// A full-support surrogate for log-det on rank-deficient PSD matrices.
pub fn logdet_eps(x: &SymMatrix, eps: f64) -> Result<f64> {
    if eps <= 0.0 {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let eig = sym_eig(x);
    if eig.values.iter().any(|&l| l < -PSD_CLAMP * (1.0 + eig.values[0].abs())) {
        return Err(Error::domain(format!(
            "matrix is not positive semidefinite: min eigenvalue {}",
            eig.values[eig.n() - 1]
        )));
    }
    Ok(eig.values.iter().map(|&l| (l.max(0.0) + eps).ln()).sum())
}

/// Sum of the `k` largest eigenvalues.
pub fn sum_top_k_eig(x: &SymMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > x.n() {
        return Err(Error::invalid(format!(
            "k must lie in 1..={}, got {k}",
            x.n()
        )));
    }
    let eig = sym_eig(x);
    Ok(eig.values.iter().take(k).sum())
}

/// Tests positive semidefiniteness of `[[A, B], [B^T, C]]` through the
/// generalized Schur complement: `A >= 0`, `(I - A A^+) B = 0`, and
/// `C - B^T A^+ B >= 0`, each within `tol`.
pub fn generalized_schur_check(
    a: &SymMatrix,
    b: &DMatrix<f64>,
    c: &SymMatrix,
    tol: f64,
) -> Result<bool> {
    if b.nrows() != a.n() || b.ncols() != c.n() {
        return Err(Error::invalid(format!(
            "block dimensions do not conform: A is {0}x{0}, B is {1}x{2}, C is {3}x{3}",
            a.n(),
            b.nrows(),
            b.ncols(),
            c.n()
        )));
    }
    if a.min_eig() < -tol {
        return Ok(false);
    }
    let a_pinv = pinv(a, None)?;
    let n = a.n();
    let range_residual = b - a.as_matrix() * a_pinv.as_matrix() * b;
    let _ = n;
    if range_residual.iter().fold(0.0f64, |m, v| m.max(v.abs())) > tol {
        return Ok(false);
    }
    let schur = c
        .as_matrix()
        .clone()
        - b.transpose() * a_pinv.as_matrix() * b;
    Ok(symmetrize(&schur).min_eig() >= -tol)
}

/// Assembles the dense block matrix `[[A, B], [B^T, C]]`.
pub fn assemble_block(a: &SymMatrix, b: &DMatrix<f64>, c: &SymMatrix) -> Result<SymMatrix> {
    if b.nrows() != a.n() || b.ncols() != c.n() {
        return Err(Error::invalid("block dimensions do not conform"));
    }
    let (p, q) = (a.n(), c.n());
    let mut m = DMatrix::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(a.as_matrix());
    m.view_mut((0, p), (p, q)).copy_from(b);
    m.view_mut((p, 0), (q, p)).copy_from(&b.transpose());
    m.view_mut((p, p), (q, q)).copy_from(c.as_matrix());
    Ok(symmetrize(&m))
}

/// Descriptor of a univariate closed convex (or, for `EpsLog`, concave)
/// scalar function used by perspectives, hulls, and cuts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFunctionSpec {
    /// Indicator of `|x| <= M`.
    BigM { m: f64 },
    /// `x^2 / (2 gamma)`.
    Ridge { gamma: f64 },
    /// Ridge plus the big-M indicator.
    RidgeBigM { gamma: f64, m: f64 },
    /// `|x|^p` for `p >= 1`.
    Power { p: f64 },
    /// `-log(x + eps)` for `eps > 0`.
    Log { eps: f64 },
    /// `x log x` on `x >= 0`, with `0 log 0 = 0`.
    Entropy,
    /// `log(1 + exp(x))`.
    Softplus,
    /// `x^2`.
    Square,
    /// `-x^alpha` on `x >= 0` for `alpha` in `(0, 1)`.
    NegPower { alpha: f64 },
    /// Concave `log(x)` on `x > 0` whose value at `0` is taken as `log(eps)`.
    ///
    /// This is the evaluator for pseudo-log-determinant objectives: inputs
    /// carry the `+eps` spectral shift already, and rank-deficient directions
    /// contribute `log(eps)` through the trace correction term instead of
    /// blowing up.
    EpsLog { eps: f64 },
}

impl ScalarFunctionSpec {
    /// Validates parameter ranges: `M > 0`, `gamma > 0`, `p >= 1`,
    /// `alpha in (0, 1)`, `eps > 0`.
    pub fn validate(&self) -> Result<()> {
        use ScalarFunctionSpec::*;
        let ok = match *self {
            BigM { m } => m > 0.0,
            Ridge { gamma } => gamma > 0.0,
            RidgeBigM { gamma, m } => gamma > 0.0 && m > 0.0,
            Power { p } => p >= 1.0,
            Log { eps } => eps > 0.0,
            Entropy | Softplus | Square => true,
            NegPower { alpha } => alpha > 0.0 && alpha < 1.0,
            EpsLog { eps } => eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("parameters out of range: {self:?}")))
        }
    }

    /// Evaluates the scalar function; `None` marks points outside the domain.
    pub fn eval(&self, x: f64) -> Option<f64> {
        use ScalarFunctionSpec::*;
        match *self {
            BigM { m } => (x.abs() <= m).then_some(0.0),
            Ridge { gamma } => Some(x * x / (2.0 * gamma)),
            RidgeBigM { gamma, m } => (x.abs() <= m).then_some(x * x / (2.0 * gamma)),
            Power { p } => Some(x.abs().powf(p)),
            Log { eps } => (x + eps > 0.0).then(|| -(x + eps).ln()),
            Entropy => {
                if x > 0.0 {
                    Some(x * x.ln())
                } else if x == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Softplus => Some(softplus(x)),
            Square => Some(x * x),
            NegPower { alpha } => (x >= 0.0).then(|| -x.powf(alpha)),
            EpsLog { .. } => (x > 0.0).then(|| x.ln()),
        }
    }

    /// Value at the origin, as used by the trace correction term.
    ///
    /// For `EpsLog` the correction value is `log(eps)`: the limit of
    /// `log(lambda + eps)` on a rank-deficient direction.
    pub fn omega0(&self) -> f64 {
        use ScalarFunctionSpec::*;
        match *self {
            BigM { .. } | Ridge { .. } | RidgeBigM { .. } | Power { .. } | Square => 0.0,
            Log { eps } => -eps.ln(),
            Entropy => 0.0,
            Softplus => 2f64.ln(),
            NegPower { .. } => 0.0,
            EpsLog { eps } => eps.ln(),
        }
    }

    /// A subgradient at `x` (any element of the subdifferential; ties broken
    /// at the midpoint where the interval is bounded).
    pub fn subgradient(&self, x: f64) -> Result<f64> {
        use ScalarFunctionSpec::*;
        if self.eval(x).is_none() {
            return Err(Error::domain(format!("{x} outside the domain of {self:?}")));
        }
        Ok(match *self {
            BigM { .. } => 0.0,
            Ridge { gamma } => x / gamma,
            RidgeBigM { gamma, .. } => x / gamma,
            Power { p } => {
                if x == 0.0 {
                    // subdifferential is [-1, 1] for p = 1, {0} for p > 1
                    0.0
                } else {
                    p * x.abs().powf(p - 1.0) * x.signum()
                }
            }
            Log { eps } => -1.0 / (x + eps),
            Entropy => {
                if x > 0.0 {
                    x.ln() + 1.0
                } else {
                    return Err(Error::domain(
                        "entropy has no subgradient at the origin",
                    ));
                }
            }
            Softplus => 1.0 / (1.0 + (-x).exp()),
            Square => 2.0 * x,
            NegPower { alpha } => {
                if x > 0.0 {
                    -alpha * x.powf(alpha - 1.0)
                } else {
                    return Err(Error::domain(
                        "negative power has no subgradient at the origin",
                    ));
                }
            }
            EpsLog { .. } => 1.0 / x,
        })
    }

    /// True for the concave catalog entry (`EpsLog`); everything else is convex.
    pub fn is_concave(&self) -> bool {
        matches!(self, ScalarFunctionSpec::EpsLog { .. })
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) = max(x, 0) + log(1 + e^-|x|)
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
