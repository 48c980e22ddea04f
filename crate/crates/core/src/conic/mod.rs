//! Standard-form conic programming: `min c^T x  s.t.  b - A x in K`,
//! where `K` is a product of zero, nonnegative, second-order, rotated
//! second-order, and PSD cones. Solved by a dense operator-splitting
//! method; see [`solver`].
//!
//! PSD blocks live in packed `svec` coordinates (off-diagonals scaled by
//! `sqrt(2)`), so the whole slack vector sits in one Euclidean space and
//! `<X, Y> = svec(X) . svec(Y)`.

mod solver;

pub use solver::{solve, SolveSettings, Solution, SolveStatus};

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::error::{Error, Result};
use crate::specfun::{sym_eig, symmetrize, SymMatrix};

/// One block of a product cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// `{0}^m` (equality rows).
    Zero(usize),
    /// `R_+^m`.
    NonNeg(usize),
    /// `{(t, u) : ||u||_2 <= t}` of total length `d >= 2`.
    SecondOrder(usize),
    /// `{(a, b, u) : 2ab >= ||u||^2, a, b >= 0}` of total length `d >= 3`.
    RotatedSecondOrder(usize),
    /// PSD cone of side `n`, stored packed with length `n (n + 1) / 2`.
    Psd(usize),
}

impl ConeBlock {
    /// Length of the block inside the slack vector.
    pub fn len(&self) -> usize {
        match *self {
            ConeBlock::Zero(m) | ConeBlock::NonNeg(m) => m,
            ConeBlock::SecondOrder(d) | ConeBlock::RotatedSecondOrder(d) => d,
            ConeBlock::Psd(n) => n * (n + 1) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConeBlock::Zero(m) | ConeBlock::NonNeg(m) => m >= 1,
            ConeBlock::SecondOrder(d) => d >= 2,
            ConeBlock::RotatedSecondOrder(d) => d >= 3,
            ConeBlock::Psd(n) => n >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("cone block too small: {self:?}")))
        }
    }
}

/// Ordered product of cone blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConeSpec {
    pub blocks: Vec<ConeBlock>,
}

impl ConeSpec {
    pub fn new(blocks: Vec<ConeBlock>) -> Result<Self> {
        for b in &blocks {
            b.validate()?;
        }
        Ok(ConeSpec { blocks })
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Iterates `(offset, block)` pairs.
    pub fn iter_offsets(&self) -> impl Iterator<Item = (usize, ConeBlock)> + '_ {
        let mut off = 0;
        self.blocks.iter().map(move |&b| {
            let o = off;
            off += b.len();
            (o, b)
        })
    }
}

/// Sparse matrix in triplet + CSR form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid("non-finite matrix entry"));
            }
            if v != 0.0 {
                entries.push((r, c, v));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = merged.iter().map(|t| t.1).collect();
        let vals = merged.iter().map(|t| t.2).collect();
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[s..e], &self.vals[s..e])
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals.iter()) {
                acc += v * x[*c];
            }
            y[r] = acc;
        }
    }

    /// `y = A^T x`.
    pub fn mul_t_vec(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals.iter()) {
                y[*c] += v * xr;
            }
        }
    }

    /// Dense `I + A^T A` (the reduced KKT system of the splitting solver).
    pub fn identity_plus_gram(&self) -> DMatrix<f64> {
        let n = self.ncols;
        let mut g = DMatrix::identity(n, n);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (i, (&ci, &vi)) in cols.iter().zip(vals.iter()).enumerate() {
                for (&cj, &vj) in cols[i..].iter().zip(vals[i..].iter()) {
                    g[(ci, cj)] += vi * vj;
                    if ci != cj {
                        g[(cj, ci)] += vi * vj;
                    }
                }
            }
        }
        g
    }

    /// Row-scaled and column-scaled copy entries: `a_ij <- d_i a_ij e_j`.
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for r in 0..self.nrows {
            let (s, t) = (self.row_ptr[r], self.row_ptr[r + 1]);
            for k in s..t {
                self.vals[k] *= d[r] * e[self.col_idx[k]];
            }
        }
    }

    /// Infinity norm of each row.
    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                let (_, vals) = self.row(r);
                vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .collect()
    }

    /// Infinity norm of each column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        let mut norms = vec![0.0f64; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals.iter()) {
                norms[*c] = norms[*c].max(v.abs());
            }
        }
        norms
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals.iter()) {
                out.push((r, *c, *v));
            }
        }
        out
    }
}

/// A conic program `min c^T x + obj_const  s.t.  b - A x in cones`.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub c: DVector<f64>,
    pub a: SparseMatrix,
    pub b: DVector<f64>,
    pub cones: ConeSpec,
    pub obj_const: f64,
}

impl ConicProblem {
    pub fn validate(&self) -> Result<()> {
        if self.a.nrows != self.b.len() || self.a.ncols != self.c.len() {
            return Err(Error::invalid(format!(
                "dimension mismatch: A is {}x{}, b has {}, c has {}",
                self.a.nrows,
                self.a.ncols,
                self.b.len(),
                self.c.len()
            )));
        }
        if self.cones.total_len() != self.b.len() {
            return Err(Error::invalid(format!(
                "cone length {} does not match slack dimension {}",
                self.cones.total_len(),
                self.b.len()
            )));
        }
        if self.b.iter().any(|v| !v.is_finite())
            || self.c.iter().any(|v| !v.is_finite())
            || !self.obj_const.is_finite()
        {
            return Err(Error::invalid("non-finite problem data"));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Debug dump with the documented schema:
    /// `{"c": [...], "A": {"rows": [...], "cols": [...], "vals": [...]},
    ///   "b": [...], "cones": [{"type": "psd", "n": 5}, ...], "obj_const": 0.0}`.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let trips = self.a.triplets();
        let cones: Vec<serde_json::Value> = self
            .cones
            .blocks
            .iter()
            .map(|b| match *b {
                ConeBlock::Zero(m) => json!({"type": "zero", "m": m}),
                ConeBlock::NonNeg(m) => json!({"type": "nonneg", "m": m}),
                ConeBlock::SecondOrder(d) => json!({"type": "soc", "d": d}),
                ConeBlock::RotatedSecondOrder(d) => json!({"type": "rsoc", "d": d}),
                ConeBlock::Psd(n) => json!({"type": "psd", "n": n}),
            })
            .collect();
        json!({
            "c": self.c.as_slice(),
            "A": {
                "rows": trips.iter().map(|t| t.0).collect::<Vec<_>>(),
                "cols": trips.iter().map(|t| t.1).collect::<Vec<_>>(),
                "vals": trips.iter().map(|t| t.2).collect::<Vec<_>>(),
            },
            "b": self.b.as_slice(),
            "cones": cones,
            "obj_const": self.obj_const,
        })
    }
}

/// Packed length `n (n + 1) / 2` for side `n`.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Side length from a packed length, or an error if not triangular.
pub fn svec_side(len: usize) -> Result<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1)) / 2;
    for cand in n.saturating_sub(1)..=n + 1 {
        if svec_len(cand) == len {
            return Ok(cand);
        }
    }
    Err(Error::invalid(format!("{len} is not a triangular number")))
}

/// Packed index of `(i, j)` with `i <= j` (column-major upper triangle).
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Packs a symmetric matrix with `sqrt(2)`-scaled off-diagonals so that
/// `<X, Y> = svec(X) . svec(Y)`.
pub fn svec(x: &SymMatrix) -> DVector<f64> {
    let n = x.n();
    let mut v = DVector::zeros(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            v[svec_index(i, j)] = if i == j {
                x.entry(i, j)
            } else {
                SQRT2 * x.entry(i, j)
            };
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64]) -> Result<SymMatrix> {
    let n = svec_side(v.len())?;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let val = v[svec_index(i, j)];
            if i == j {
                m[(i, j)] = val;
            } else {
                m[(i, j)] = val / SQRT2;
                m[(j, i)] = val / SQRT2;
            }
        }
    }
    SymMatrix::new(m)
}

/// Euclidean projection onto the product cone, blockwise.
pub fn project_cone(v: &mut DVector<f64>, cones: &ConeSpec) {
    for (off, block) in cones.iter_offsets() {
        let len = block.len();
        let mut seg = v.rows_mut(off, len);
        match block {
            ConeBlock::Zero(_) => seg.fill(0.0),
            ConeBlock::NonNeg(_) => {
                for x in seg.iter_mut() {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
            }
            ConeBlock::SecondOrder(_) => {
                project_soc(seg.as_mut_slice());
            }
            ConeBlock::RotatedSecondOrder(_) => {
                project_rsoc(seg.as_mut_slice());
            }
            ConeBlock::Psd(_) => {
                project_psd(seg.as_mut_slice());
            }
        }
    }
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let u_norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if u_norm <= t {
        // inside the cone already
    } else if u_norm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let beta = 0.5 * (t + u_norm);
        v[0] = beta;
        let scale = beta / u_norm;
        for x in v[1..].iter_mut() {
            *x *= scale;
        }
    }
}

/// Orthogonal involution mapping the rotated cone onto the standard one:
/// `(a, b, u) -> ((a + b)/sqrt(2), (a - b)/sqrt(2), u)`.
fn rsoc_rotate(v: &mut [f64]) {
    let (a, b) = (v[0], v[1]);
    v[0] = (a + b) / SQRT2;
    v[1] = (a - b) / SQRT2;
}

fn project_rsoc(v: &mut [f64]) {
    rsoc_rotate(v);
    project_soc(v);
    rsoc_rotate(v);
}

fn project_psd(v: &mut [f64]) {
    let x = smat(v).expect("packed PSD block has triangular length");
    let eig = sym_eig(&x);
    let clamped: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    if clamped
        .iter()
        .zip(eig.values.iter())
        .all(|(c, o)| (c - o).abs() == 0.0)
    {
        return; // already PSD
    }
    let proj = eig.reconstruct_with(&clamped);
    let packed = svec(&symmetrize(proj.as_matrix()));
    v.copy_from_slice(packed.as_slice());
}

/// Projection onto the dual cone via Moreau: `Pi_{K*}(v) = v + Pi_K(-v)`.
pub fn project_dual_cone(v: &DVector<f64>, cones: &ConeSpec) -> DVector<f64> {
    let mut neg = -v.clone();
    project_cone(&mut neg, cones);
    v + neg
}

/// Infinity-norm distance of the implied slack `b - A x` from the cone.
pub fn constraint_violation(p: &ConicProblem, x: &DVector<f64>) -> f64 {
    let mut s = DVector::zeros(p.num_rows());
    p.a.mul_vec(x, &mut s);
    s = &p.b - s;
    let mut proj = s.clone();
    project_cone(&mut proj, &p.cones);
    (s - proj).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svec_identity_ordering() {
        let v = svec(&SymMatrix::identity(2));
        assert_eq!(v.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn svec_smat_round_trip_and_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = 1 + rng.random_range(0..6);
            let x = SymMatrix::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap();
            let y = SymMatrix::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0).unwrap();
            let back = smat(svec(&x).as_slice()).unwrap();
            assert!(back.sub(&x).norm_max() < 1e-14);
            let via_trace = x.dot(&y);
            let via_svec = svec(&x).dot(&svec(&y));
            assert_abs_diff_eq!(via_trace, via_svec, epsilon = 1e-12);
        }
    }

    #[test]
    fn smat_rejects_non_triangular() {
        assert!(smat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn nonneg_projection() {
        let cones = ConeSpec::new(vec![ConeBlock::NonNeg(2)]).unwrap();
        let mut v = DVector::from_column_slice(&[-1.0, 2.0]);
        project_cone(&mut v, &cones);
        assert_eq!(v.as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn psd_projection_clamps_eigenvalues() {
        let cones = ConeSpec::new(vec![ConeBlock::Psd(2)]).unwrap();
        let mut v = svec(&SymMatrix::from_diagonal(&[1.0, -1.0]));
        project_cone(&mut v, &cones);
        let m = smat(v.as_slice()).unwrap();
        assert_abs_diff_eq!(m.entry(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.entry(1, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn soc_projection_closed_form() {
        let cones = ConeSpec::new(vec![ConeBlock::SecondOrder(3)]).unwrap();
        let mut v = DVector::from_column_slice(&[1.0, 2.0, 0.0]);
        project_cone(&mut v, &cones);
        assert_abs_diff_eq!(v[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_idempotent_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cones = ConeSpec::new(vec![
            ConeBlock::Zero(2),
            ConeBlock::NonNeg(3),
            ConeBlock::SecondOrder(3),
            ConeBlock::RotatedSecondOrder(4),
            ConeBlock::Psd(3),
        ])
        .unwrap();
        let len = cones.total_len();
        for _ in 0..1000 {
            let v = DVector::from_fn(len, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let mut p = v.clone();
            project_cone(&mut p, &cones);
            let mut pp = p.clone();
            project_cone(&mut pp, &cones);
            assert!((&pp - &p).amax() <= 1e-12, "projection not idempotent");

            // projection is the nearest cone point among random members
            for _ in 0..10 {
                let mut w = DVector::from_fn(len, |_, _| rng.random::<f64>() * 4.0 - 2.0);
                project_cone(&mut w, &cones);
                assert!(
                    (&v - &p).norm() <= (&v - &w).norm() + 1e-9,
                    "found a closer cone member than the projection"
                );
            }
        }
    }

    #[test]
    fn rsoc_membership_after_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let mut v: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            project_rsoc(&mut v);
            let (a, b) = (v[0], v[1]);
            let un: f64 = v[2..].iter().map(|x| x * x).sum();
            assert!(a >= -1e-12 && b >= -1e-12);
            assert!(2.0 * a * b + 1e-9 >= un);
        }
    }

    #[test]
    fn sparse_matvec_roundtrip() {
        let trips = vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (0, 0, 1.0)];
        let a = SparseMatrix::from_triplets(2, 3, &trips).unwrap();
        assert_eq!(a.nnz(), 3); // duplicate (0,0) merged
        let x = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let mut y = DVector::zeros(2);
        a.mul_vec(&x, &mut y);
        assert_eq!(y.as_slice(), &[0.0, 6.0]);
        let mut xt = DVector::zeros(3);
        a.mul_t_vec(&y, &mut xt);
        assert_eq!(xt.as_slice(), &[0.0, 18.0, 0.0]);
        let g = a.identity_plus_gram();
        // column 0: entries 3.0 (merged) -> g[0][0] = 1 + 9
        assert_abs_diff_eq!(g[(0, 0)], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(0, 2)], -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[(1, 1)], 10.0, epsilon = 1e-12);
    }
}
