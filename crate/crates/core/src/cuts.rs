//! Perspective cuts: affine minorants of scalar perspectives and their
//! matrix analogs, plus the trace, rank-one, and paired-direction
//! contractions of the semidefinite cut.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::specfun::{sym_eig, ScalarFunctionSpec, SymMatrix};

/// Scalar cut `rho >= z_coef * z + x_coef * x`, tangent to the perspective
/// of the generating function at `(xbar, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct PerspectiveCut {
    pub z_coef: f64,
    pub x_coef: f64,
}

impl PerspectiveCut {
    pub fn rhs(&self, x: f64, z: f64) -> f64 {
        self.z_coef * z + self.x_coef * x
    }

    /// `rho - rhs`; nonnegative at every point of the perspective epigraph.
    pub fn residual(&self, x: f64, z: f64, rho: f64) -> f64 {
        rho - self.rhs(x, z)
    }
}

/// Builds the cut `rho >= (c + omega(xbar)) z + s (x - xbar z)` from a
/// subgradient `s` at `xbar`.
pub fn perspective_cut(
    omega: &ScalarFunctionSpec,
    xbar: f64,
    c: f64,
) -> Result<PerspectiveCut> {
    omega.validate()?;
    let value = omega
        .eval(xbar)
        .ok_or_else(|| Error::domain(format!("{xbar} outside the domain")))?;
    let s = omega.subgradient(xbar)?;
    Ok(PerspectiveCut {
        z_coef: c + value - s * xbar,
        x_coef: s,
    })
}

/// Matrix cut `theta >= constant + sym(coeff_x X) + sym(coeff_y Y)`.
///
/// The coefficients act by symmetrized multiplication; for a cut generated
/// at `Xbar` the pieces commute with `Xbar`, so `coeff_y` is exactly
/// `f(Xbar) - S Xbar` in the shared eigenbasis.
#[derive(Debug, Clone)]
pub struct AffineMatrixCut {
    pub constant: SymMatrix,
    pub coeff_x: SymMatrix,
    pub coeff_y: SymMatrix,
}

fn sym_product(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    crate::specfun::symmetrize(&(a.as_matrix() * b.as_matrix()))
}

impl AffineMatrixCut {
    pub fn rhs(&self, x: &SymMatrix, y: &SymMatrix) -> SymMatrix {
        self.constant
            .add(&sym_product(&self.coeff_x, x))
            .add(&sym_product(&self.coeff_y, y))
    }

    /// `theta - rhs(X, Y)`; PSD at every feasible epigraph point sharing an
    /// eigenbasis with the cut.
    pub fn residual(&self, x: &SymMatrix, y: &SymMatrix, theta: &SymMatrix) -> SymMatrix {
        theta.sub(&self.rhs(x, y))
    }
}

/// Builds the matrix cut `theta >= f(Xbar) Y + S (X - Xbar Y)` where `S`
/// applies the scalar derivative on the spectrum of `Xbar`.
pub fn matrix_perspective_cut(
    f: &ScalarFunctionSpec,
    xbar: &SymMatrix,
) -> Result<AffineMatrixCut> {
    f.validate()?;
    let eig = sym_eig(xbar);
    let n = eig.n();
    let mut f_vals = Vec::with_capacity(n);
    let mut s_vals = Vec::with_capacity(n);
    for &lam in eig.values.iter() {
        let v = f
            .eval(lam)
            .ok_or_else(|| Error::domain(format!("eigenvalue {lam} outside the domain")))?;
        let s = f.subgradient(lam)?;
        f_vals.push(v);
        s_vals.push(s);
    }
    // coeff_y = f(Xbar) - S Xbar, evaluated eigenvalue-wise in the shared basis
    let y_vals: Vec<f64> = f_vals
        .iter()
        .zip(s_vals.iter())
        .zip(eig.values.iter())
        .map(|((&fv, &sv), &lam)| fv - sv * lam)
        .collect();
    Ok(AffineMatrixCut {
        constant: SymMatrix::zeros(n),
        coeff_x: eig.reconstruct_with(&s_vals),
        coeff_y: eig.reconstruct_with(&y_vals),
    })
}

/// Trace contraction of a matrix cut: a single scalar inequality.
#[derive(Debug, Clone)]
pub struct TraceCut {
    cut: AffineMatrixCut,
}

pub fn trace_cut(cut: &AffineMatrixCut) -> TraceCut {
    TraceCut { cut: cut.clone() }
}

impl TraceCut {
    /// `tr(theta) - tr(rhs)`; nonnegative wherever the matrix cut holds.
    pub fn residual(&self, x: &SymMatrix, y: &SymMatrix, theta: &SymMatrix) -> f64 {
        theta.trace()
            - self.cut.constant.trace()
            - self.cut.coeff_x.dot(x)
            - self.cut.coeff_y.dot(y)
    }
}

/// Rank-one contraction `b^T (theta - rhs) b >= 0`.
#[derive(Debug, Clone)]
pub struct RankOneCut {
    cut: AffineMatrixCut,
    b: DVector<f64>,
}

pub fn rank_one_cut(cut: &AffineMatrixCut, b: &DVector<f64>) -> Result<RankOneCut> {
    if b.amax() == 0.0 {
        return Err(Error::invalid("contraction direction must be nonzero"));
    }
    Ok(RankOneCut {
        cut: cut.clone(),
        b: b.clone(),
    })
}

impl RankOneCut {
    pub fn residual(&self, x: &SymMatrix, y: &SymMatrix, theta: &SymMatrix) -> f64 {
        let r = self.cut.residual(x, y, theta);
        (self.b.transpose() * r.as_matrix() * &self.b)[(0, 0)]
    }
}

/// Paired-direction contraction: the residual compressed to the span of
/// two directions, a `2 x 2` semidefinite inequality.
#[derive(Debug, Clone)]
pub struct SocPairCut {
    cut: AffineMatrixCut,
    v1: DVector<f64>,
    v2: DVector<f64>,
}

pub fn soc_pair_cut(
    cut: &AffineMatrixCut,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
) -> Result<SocPairCut> {
    if v1.amax() == 0.0 || v2.amax() == 0.0 {
        return Err(Error::invalid("contraction directions must be nonzero"));
    }
    Ok(SocPairCut {
        cut: cut.clone(),
        v1: v1.clone(),
        v2: v2.clone(),
    })
}

impl SocPairCut {
    /// The compressed residual `[v1 v2]^T R [v1 v2]`.
    pub fn residual(&self, x: &SymMatrix, y: &SymMatrix, theta: &SymMatrix) -> [[f64; 2]; 2] {
        let r = self.cut.residual(x, y, theta);
        let rm = r.as_matrix();
        let q = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * rm * b)[(0, 0)];
        [
            [q(&self.v1, &self.v1), q(&self.v1, &self.v2)],
            [q(&self.v2, &self.v1), q(&self.v2, &self.v2)],
        ]
    }

    /// Smallest eigenvalue of the compressed residual.
    pub fn min_eig(&self, x: &SymMatrix, y: &SymMatrix, theta: &SymMatrix) -> f64 {
        let m = self.residual(x, y, theta);
        let (a, b, c) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        mean - rad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::symmetrize;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_cut_matches_closed_form() {
        // omega = x^2 at xbar = 1 with c = 0: rho >= 2x - z
        let cut = perspective_cut(&ScalarFunctionSpec::Square, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(cut.z_coef, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cut.x_coef, 2.0, epsilon = 1e-12);
        // tangency at (xbar, z = 1)
        assert_abs_diff_eq!(cut.residual(1.0, 1.0, 1.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cut_at_origin() {
        let cut = perspective_cut(&ScalarFunctionSpec::Softplus, 0.0, 0.3).unwrap();
        // rho >= (c + omega(0)) z + s x
        assert_abs_diff_eq!(cut.z_coef, 0.3 + 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(cut.x_coef, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn scalar_cut_never_cuts_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let specs = [
            ScalarFunctionSpec::Square,
            ScalarFunctionSpec::Ridge { gamma: 0.6 },
            ScalarFunctionSpec::Power { p: 3.0 },
            ScalarFunctionSpec::Softplus,
        ];
        for spec in specs {
            for _ in 0..1000 {
                let xbar = rng.random::<f64>() * 3.0 - 1.5;
                let c = rng.random::<f64>();
                let cut = perspective_cut(&spec, xbar, c).unwrap();
                // feasible binary points: z = 1 with rho = omega(x) + c, and
                // z = 0 with x = 0, rho = 0
                let x = rng.random::<f64>() * 3.0 - 1.5;
                if let Some(fx) = spec.eval(x) {
                    assert!(cut.residual(x, 1.0, fx + c) >= -1e-9);
                }
                assert!(cut.residual(0.0, 0.0, 0.0) >= -1e-9);
            }
        }
    }

    #[test]
    fn matrix_cut_zero_base() {
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &SymMatrix::zeros(2))
            .unwrap();
        assert!(cut.coeff_x.norm_max() < 1e-12);
        assert!(cut.coeff_y.norm_max() < 1e-12);
    }

    #[test]
    fn matrix_cut_square_specialization() {
        // f = square at Xbar: theta >= Xbar (2X - Xbar Y) symmetrized
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let xbar = symmetrize(&a);
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &xbar).unwrap();
        let x = symmetrize(&DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5));
        let y = symmetrize(&DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5));
        let direct = crate::specfun::symmetrize(
            &(xbar.as_matrix()
                * (x.as_matrix() * 2.0 - xbar.as_matrix() * y.as_matrix())),
        );
        let via_cut = cut.rhs(&x, &y);
        assert!(via_cut.sub(&direct).norm_max() < 1e-10);
    }

    #[test]
    fn matrix_cut_active_at_generation_point() {
        let xbar = SymMatrix::from_diagonal(&[1.0, 0.0]);
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &xbar).unwrap();
        let theta = SymMatrix::from_diagonal(&[1.0, 0.0]); // Xbar^2
        let r = cut.residual(&xbar, &SymMatrix::identity(2), &theta);
        assert!(r.norm_max() < 1e-12, "cut must be tight at its base point");
    }

    fn random_commuting_feasible(
        rng: &mut ChaCha8Rng,
        n: usize,
        rank: usize,
    ) -> (SymMatrix, SymMatrix, SymMatrix, DMatrix<f64>) {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let u = a.qr().q();
        let mut lx = vec![0.0; n];
        let mut ly = vec![0.0; n];
        for i in 0..rank {
            lx[i] = rng.random::<f64>() * 2.0 - 1.0;
            ly[i] = 1.0;
        }
        let diag = |v: &[f64]| {
            symmetrize(
                &(&u * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
                    * u.transpose()),
            )
        };
        let x = diag(&lx);
        let y = diag(&ly);
        // theta = per-eigenvalue perspective of the square: x^2 / y on support
        let lt: Vec<f64> = lx
            .iter()
            .zip(ly.iter())
            .map(|(&a, &b)| if b > 0.0 { a * a / b } else { 0.0 })
            .collect();
        let theta = diag(&lt);
        (x, y, theta, u)
    }

    #[test]
    fn matrix_cut_valid_on_commuting_feasible_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for trial in 0..500 {
            let n = 3 + trial % 2;
            let rank = 1 + trial % n;
            let (x, y, theta, u) = random_commuting_feasible(&mut rng, n, rank);
            // cut generated at a co-diagonal base point
            let lbar: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let xbar = symmetrize(
                &(&u * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&lbar))
                    * u.transpose()),
            );
            let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &xbar).unwrap();
            let resid = cut.residual(&x, &y, &theta);
            assert!(
                resid.min_eig() >= -1e-8,
                "trial {trial}: cut violated by {}",
                resid.min_eig()
            );

            // contractions inherit validity
            let tc = trace_cut(&cut);
            assert!(tc.residual(&x, &y, &theta) >= -1e-8);
            let e1 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
            let rc = rank_one_cut(&cut, &e1).unwrap();
            assert!(rc.residual(&x, &y, &theta) >= -1e-8);
            let v2 = DVector::from_fn(n, |i, _| rng.random::<f64>() + if i == 1 { 1.0 } else { 0.0 });
            let sc = soc_pair_cut(&cut, &e1, &v2).unwrap();
            assert!(sc.min_eig(&x, &y, &theta) >= -1e-8);
        }
    }

    #[test]
    fn trace_cut_identity_substitution() {
        // f = square at Xbar = I: tr(theta) >= tr(2X - Y)
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &SymMatrix::identity(2))
            .unwrap();
        let tc = trace_cut(&cut);
        let x = SymMatrix::from_diagonal(&[0.7, 0.2]);
        let y = SymMatrix::from_diagonal(&[1.0, 0.5]);
        let theta = SymMatrix::from_diagonal(&[3.0, 3.0]);
        let expect = theta.trace() - (2.0 * x.trace() - y.trace());
        assert_abs_diff_eq!(tc.residual(&x, &y, &theta), expect, epsilon = 1e-12);
        // rank-one with e1 reads the (0, 0) entry
        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        let rc = rank_one_cut(&cut, &e1).unwrap();
        let expect00 = theta.entry(0, 0) - (2.0 * x.entry(0, 0) - y.entry(0, 0));
        assert_abs_diff_eq!(rc.residual(&x, &y, &theta), expect00, epsilon = 1e-12);
    }

    #[test]
    fn contraction_rejects_zero_directions() {
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &SymMatrix::identity(2))
            .unwrap();
        let zero = DVector::zeros(2);
        assert!(rank_one_cut(&cut, &zero).is_err());
        assert!(soc_pair_cut(&cut, &zero, &DVector::from_column_slice(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn domain_violations_are_errors() {
        assert!(matrix_perspective_cut(
            &ScalarFunctionSpec::NegPower { alpha: 0.5 },
            &SymMatrix::from_diagonal(&[-1.0, 1.0])
        )
        .is_err());
        assert!(perspective_cut(&ScalarFunctionSpec::Entropy, -1.0, 0.0).is_err());
    }
}
