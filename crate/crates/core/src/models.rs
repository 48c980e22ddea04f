//! Relaxation builders.
//!
//! Each builder lowers one estimation problem to a standard-form conic
//! program plus a variable map that ties conic coordinates back to named
//! matrices. Quadratic losses become rotated second-order cone epigraphs,
//! since the solver takes linear objectives only; symmetric matrix
//! variables are stored packed (`svec` scaling), so PSD domain constraints
//! are identity rows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{svec, svec_index, svec_len, ConeBlock, ConeSpec, ConicProblem, SparseMatrix};
use crate::error::{Error, Result};
use crate::specfun::{sym_eig, SymMatrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// A linear expression `constant + sum coef_i * x_i` over solver coordinates.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(v: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: v,
        }
    }

    pub fn var(coord: usize) -> Self {
        LinExpr {
            terms: vec![(coord, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(coord: usize, coef: f64) -> Self {
        LinExpr {
            terms: vec![(coord, coef)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn sub(mut self, other: &LinExpr) -> Self {
        self.terms
            .extend(other.terms.iter().map(|&(c, v)| (c, -v)));
        self.constant -= other.constant;
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn plus_constant(mut self, v: f64) -> Self {
        self.constant += v;
        self
    }
}

/// A symmetric matrix variable stored packed with `sqrt(2)` off-diagonals.
#[derive(Debug, Clone, Copy)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

impl SymVar {
    pub fn packed_coord(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.offset + svec_index(i, j)
    }

    /// Expression for the matrix entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> LinExpr {
        let coef = if i == j { 1.0 } else { 1.0 / SQRT2 };
        LinExpr::term(self.packed_coord(i, j), coef)
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr {
            terms: (0..self.n).map(|i| (self.packed_coord(i, i), 1.0)).collect(),
            constant: 0.0,
        }
    }

    pub fn packed_len(&self) -> usize {
        svec_len(self.n)
    }
}

/// A dense rectangular variable stored column-major.
#[derive(Debug, Clone, Copy)]
pub struct RectVar {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl RectVar {
    pub fn coord(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        self.offset + j * self.rows + i
    }

    pub fn entry(&self, i: usize, j: usize) -> LinExpr {
        LinExpr::var(self.coord(i, j))
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Location of a named variable inside the solver's coordinate vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBlock {
    SymPacked { offset: usize, n: usize },
    Rect { offset: usize, rows: usize, cols: usize },
    Scalar { offset: usize },
}

impl VarBlock {
    pub fn len(&self) -> usize {
        match *self {
            VarBlock::SymPacked { n, .. } => svec_len(n),
            VarBlock::Rect { rows, cols, .. } => rows * cols,
            VarBlock::Scalar { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self) -> usize {
        match *self {
            VarBlock::SymPacked { offset, .. }
            | VarBlock::Rect { offset, .. }
            | VarBlock::Scalar { offset } => offset,
        }
    }
}

/// A conic program plus the map from names to coordinate blocks.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub problem: ConicProblem,
    pub varmap: Vec<(String, VarBlock)>,
}

/// A named variable reassembled from a solution vector.
#[derive(Debug, Clone)]
pub enum ExtractedVar {
    Matrix(DMatrix<f64>),
    Scalar(f64),
}

impl ExtractedVar {
    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            ExtractedVar::Matrix(m) => Some(m),
            ExtractedVar::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ExtractedVar::Scalar(v) => Some(*v),
            ExtractedVar::Matrix(_) => None,
        }
    }
}

impl BuiltModel {
    pub fn block(&self, name: &str) -> Option<VarBlock> {
        self.varmap
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| *b)
    }

    /// Reassembles one named variable from a solution vector.
    pub fn extract_one(&self, x: &DVector<f64>, name: &str) -> Option<ExtractedVar> {
        let block = self.block(name)?;
        Some(match block {
            VarBlock::Scalar { offset } => ExtractedVar::Scalar(x[offset]),
            VarBlock::Rect { offset, rows, cols } => {
                let mut m = DMatrix::zeros(rows, cols);
                for j in 0..cols {
                    for i in 0..rows {
                        m[(i, j)] = x[offset + j * rows + i];
                    }
                }
                ExtractedVar::Matrix(m)
            }
            VarBlock::SymPacked { offset, n } => {
                let packed = &x.as_slice()[offset..offset + svec_len(n)];
                let m = crate::conic::smat(packed).expect("triangular length by construction");
                ExtractedVar::Matrix(m.into_matrix())
            }
        })
    }

    /// Reassembles every named variable.
    pub fn extract(&self, x: &DVector<f64>) -> BTreeMap<String, ExtractedVar> {
        self.varmap
            .iter()
            .map(|(name, _)| {
                (
                    name.clone(),
                    self.extract_one(x, name).expect("name from varmap"),
                )
            })
            .collect()
    }

    /// Checks the varmap invariant: blocks are disjoint and cover the vector.
    pub fn varmap_covers(&self) -> bool {
        let mut covered = vec![false; self.problem.num_vars()];
        for (_, b) in &self.varmap {
            for k in b.offset()..b.offset() + b.len() {
                if k >= covered.len() || covered[k] {
                    return false;
                }
                covered[k] = true;
            }
        }
        covered.iter().all(|&c| c)
    }
}

/// Incremental conic model assembly.
#[derive(Debug, Default)]
pub struct ModelBuilder {
    nvars: usize,
    cost: Vec<(usize, f64)>,
    obj_const: f64,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<ConeBlock>,
    varmap: Vec<(String, VarBlock)>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        ModelBuilder::default()
    }

    pub fn add_sym(&mut self, name: &str, n: usize) -> SymVar {
        let v = SymVar {
            offset: self.nvars,
            n,
        };
        self.nvars += svec_len(n);
        self.varmap
            .push((name.to_string(), VarBlock::SymPacked { offset: v.offset, n }));
        v
    }

    pub fn add_rect(&mut self, name: &str, rows: usize, cols: usize) -> RectVar {
        let v = RectVar {
            offset: self.nvars,
            rows,
            cols,
        };
        self.nvars += rows * cols;
        self.varmap.push((
            name.to_string(),
            VarBlock::Rect {
                offset: v.offset,
                rows,
                cols,
            },
        ));
        v
    }

    pub fn add_scalar(&mut self, name: &str) -> usize {
        let coord = self.nvars;
        self.nvars += 1;
        self.varmap
            .push((name.to_string(), VarBlock::Scalar { offset: coord }));
        coord
    }

    pub fn add_cost(&mut self, coord: usize, coef: f64) {
        self.cost.push((coord, coef));
    }

    pub fn add_cost_expr(&mut self, expr: &LinExpr) {
        for &(c, v) in &expr.terms {
            self.cost.push((c, v));
        }
        self.obj_const += expr.constant;
    }

    pub fn add_obj_const(&mut self, v: f64) {
        self.obj_const += v;
    }

    fn push_row(&mut self, expr: &LinExpr) {
        let row = self.b.len();
        self.b.push(expr.constant);
        for &(c, v) in &expr.terms {
            self.triplets.push((row, c, -v));
        }
    }

    /// `expr == 0` rows.
    pub fn push_zero_rows(&mut self, exprs: &[LinExpr]) {
        for e in exprs {
            self.push_row(e);
        }
        self.cones.push(ConeBlock::Zero(exprs.len()));
    }

    /// `expr >= 0` rows.
    pub fn push_nonneg_rows(&mut self, exprs: &[LinExpr]) {
        for e in exprs {
            self.push_row(e);
        }
        self.cones.push(ConeBlock::NonNeg(exprs.len()));
    }

    /// `(t, u...)` in the second-order cone.
    pub fn push_soc(&mut self, exprs: &[LinExpr]) {
        for e in exprs {
            self.push_row(e);
        }
        self.cones.push(ConeBlock::SecondOrder(exprs.len()));
    }

    /// `(a, b, u...)` with `2ab >= ||u||^2`, `a, b >= 0`.
    pub fn push_rsoc(&mut self, exprs: &[LinExpr]) {
        for e in exprs {
            self.push_row(e);
        }
        self.cones
            .push(ConeBlock::RotatedSecondOrder(exprs.len()));
    }

    /// `M(x) >= 0` where `entry(i, j)` gives the affine `(i, j)` entry of a
    /// symmetric matrix of side `n`.
    pub fn push_psd(&mut self, n: usize, entry: impl Fn(usize, usize) -> LinExpr) {
        for j in 0..n {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { SQRT2 };
                let e = entry(i, j).scale(scale);
                self.push_row(&e);
            }
        }
        self.cones.push(ConeBlock::Psd(n));
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn finish(self) -> Result<BuiltModel> {
        let mut c = DVector::zeros(self.nvars);
        for (coord, coef) in self.cost {
            c[coord] += coef;
        }
        let a = SparseMatrix::from_triplets(self.b.len(), self.nvars, &self.triplets)?;
        let problem = ConicProblem {
            c,
            a,
            b: DVector::from_vec(self.b),
            cones: ConeSpec::new(self.cones)?,
            obj_const: self.obj_const,
        };
        problem.validate()?;
        let model = BuiltModel {
            problem,
            varmap: self.varmap,
        };
        debug_assert!(model.varmap_covers());
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// instance types
// ---------------------------------------------------------------------------

pub(crate) mod serde_mat {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

fn default_schema_version() -> u32 {
    1
}

/// Reduced-rank ridge regression data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RrrInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// Design matrix, `m x p`.
    #[serde(rename = "X", with = "serde_mat")]
    pub x_data: DMatrix<f64>,
    /// Response matrix, `m x n`.
    #[serde(rename = "Y", with = "serde_mat")]
    pub y_data: DMatrix<f64>,
    pub gamma: f64,
    pub mu: f64,
}

impl RrrInstance {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x_data.nrows(), self.x_data.ncols(), self.y_data.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let (m, p, n) = self.dims();
        if m == 0 || p == 0 || n == 0 {
            return Err(Error::invalid("empty regression data"));
        }
        if self.y_data.nrows() != m {
            return Err(Error::invalid(format!(
                "X has {m} rows but Y has {}",
                self.y_data.nrows()
            )));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be positive"));
        }
        if self.mu < 0.0 {
            return Err(Error::invalid("mu must be nonnegative"));
        }
        Ok(())
    }
}

/// Symmetric matrix completion data: observed entries of a PSD matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub n: usize,
    /// `(i, j, value)` with `i <= j`, no duplicates.
    pub observed: Vec<(usize, usize, f64)>,
    pub gamma: f64,
    pub mu: f64,
}

impl CompletionInstance {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.gamma <= 0.0 || self.mu < 0.0 {
            return Err(Error::invalid("need gamma > 0 and mu >= 0"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j, v) in &self.observed {
            if i > j || j >= self.n {
                return Err(Error::invalid(format!("bad index pair ({i}, {j})")));
            }
            if !v.is_finite() {
                return Err(Error::invalid("non-finite observation"));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid(format!("duplicate observation ({i}, {j})")));
            }
        }
        Ok(())
    }
}

/// Dense third-order tensor, row-major over `(i1, i2, i3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub dims: (usize, usize, usize),
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn lin(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.dims.1 + i2) * self.dims.2 + i3
    }

    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[self.lin(i1, i2, i3)]
    }

    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        let k = self.lin(i1, i2, i3);
        self.data[k] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Linear position of entry `(i1, i2, i3)` inside the mode-`mode` unfolding:
/// `(row, col)` with the remaining indices ordered lexicographically.
pub fn unfold_position(
    dims: (usize, usize, usize),
    mode: usize,
    idx: (usize, usize, usize),
) -> (usize, usize) {
    let (i1, i2, i3) = idx;
    match mode {
        1 => (i1, i2 * dims.2 + i3),
        2 => (i2, i1 * dims.2 + i3),
        3 => (i3, i1 * dims.1 + i2),
        _ => panic!("mode must be 1, 2, or 3"),
    }
}

/// Shape `(rows, cols)` of the mode-`mode` unfolding.
pub fn unfold_shape(dims: (usize, usize, usize), mode: usize) -> (usize, usize) {
    let total = dims.0 * dims.1 * dims.2;
    let rows = match mode {
        1 => dims.0,
        2 => dims.1,
        3 => dims.2,
        _ => panic!("mode must be 1, 2, or 3"),
    };
    (rows, total / rows)
}

/// Mode-`mode` unfolding: index `mode` on rows, remaining indices
/// lexicographic on columns.
pub fn unfold(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    if !(1..=3).contains(&mode) {
        return Err(Error::invalid(format!("mode must be 1..=3, got {mode}")));
    }
    let (rows, cols) = unfold_shape(t.dims, mode);
    let mut m = DMatrix::zeros(rows, cols);
    for i1 in 0..t.dims.0 {
        for i2 in 0..t.dims.1 {
            for i3 in 0..t.dims.2 {
                let (r, c) = unfold_position(t.dims, mode, (i1, i2, i3));
                m[(r, c)] = t.get(i1, i2, i3);
            }
        }
    }
    Ok(m)
}

/// Inverse of [`unfold`].
pub fn fold(m: &DMatrix<f64>, mode: usize, dims: (usize, usize, usize)) -> Result<Tensor3> {
    if !(1..=3).contains(&mode) {
        return Err(Error::invalid(format!("mode must be 1..=3, got {mode}")));
    }
    let (rows, cols) = unfold_shape(dims, mode);
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::invalid(format!(
            "unfolding shape mismatch: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for i1 in 0..dims.0 {
        for i2 in 0..dims.1 {
            for i3 in 0..dims.2 {
                let (r, c) = unfold_position(dims, mode, (i1, i2, i3));
                t.set(i1, i2, i3, m[(r, c)]);
            }
        }
    }
    Ok(t)
}

/// Low-rank tensor completion data (three modes).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub dims: (usize, usize, usize),
    /// `(i1, i2, i3, value)` observations.
    pub observed: Vec<(usize, usize, usize, f64)>,
    /// Per-mode rank bounds.
    pub k: (usize, usize, usize),
    /// Weight on the sum of unfolding regularizers.
    pub weight: f64,
}

impl TensorInstance {
    pub fn validate(&self) -> Result<()> {
        let (n1, n2, n3) = self.dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(Error::invalid("tensor dimensions must be positive"));
        }
        if self.weight < 0.0 {
            return Err(Error::invalid("weight must be nonnegative"));
        }
        for &(i1, i2, i3, v) in &self.observed {
            if i1 >= n1 || i2 >= n2 || i3 >= n3 {
                return Err(Error::invalid(format!(
                    "index ({i1}, {i2}, {i3}) out of range"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid("non-finite observation"));
            }
        }
        Ok(())
    }
}

/// Nonnegative symmetric factorization data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NmfInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(rename = "A", with = "serde_mat")]
    pub a: DMatrix<f64>,
    pub k: usize,
}

impl NmfInstance {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() == 0 || self.a.nrows() != self.a.ncols() {
            return Err(Error::invalid("A must be square and nonempty"));
        }
        if self.a.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("A must be entrywise nonnegative and finite"));
        }
        if self.k == 0 || self.k > self.n() {
            return Err(Error::invalid(format!("k must lie in 1..={}", self.n())));
        }
        Ok(())
    }

    pub fn a_sym(&self) -> SymMatrix {
        crate::specfun::symmetrize(&self.a)
    }
}

/// Low-rank plus diagonal covariance decomposition data (power fixed to 2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(rename = "Sigma", with = "serde_mat")]
    pub sigma: DMatrix<f64>,
    pub k: usize,
    /// Spectral bound on the low-rank part.
    pub m_bound: f64,
}

impl FactorInstance {
    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.nrows() == 0 || self.sigma.nrows() != self.sigma.ncols() {
            return Err(Error::invalid("Sigma must be square and nonempty"));
        }
        if self.m_bound <= 0.0 {
            return Err(Error::invalid("spectral bound must be positive"));
        }
        if self.k > self.n() {
            return Err(Error::invalid("k exceeds the matrix side"));
        }
        let s = crate::specfun::symmetrize(&self.sigma);
        if s.min_eig() < -1e-10 * (1.0 + s.norm_max()) {
            return Err(Error::invalid("Sigma must be positive semidefinite"));
        }
        Ok(())
    }

    pub fn sigma_sym(&self) -> SymMatrix {
        crate::specfun::symmetrize(&self.sigma)
    }
}

/// Rank-k approximation data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdInstance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(rename = "A", with = "serde_mat")]
    pub a: DMatrix<f64>,
    pub k: usize,
}

impl SvdInstance {
    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() == 0 || self.a.ncols() == 0 {
            return Err(Error::invalid("A must be nonempty"));
        }
        if self.k == 0 || self.k > self.a.nrows().min(self.a.ncols()) {
            return Err(Error::invalid("k must lie in 1..=min(dims)"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

/// Rotated-cone epigraph `t >= ||residuals||^2 / (2 scale)`.
fn push_quadratic_epigraph(
    mb: &mut ModelBuilder,
    t_coord: usize,
    scale: f64,
    residuals: Vec<LinExpr>,
) {
    let mut exprs = Vec::with_capacity(residuals.len() + 2);
    exprs.push(LinExpr::var(t_coord));
    exprs.push(LinExpr::constant(scale));
    exprs.extend(residuals);
    mb.push_rsoc(&exprs);
}

/// `Y <= I` as a PSD block.
fn push_bounded_by_identity(mb: &mut ModelBuilder, y: SymVar) {
    mb.push_psd(y.n, |i, j| {
        let c = if i == j { 1.0 } else { 0.0 };
        LinExpr::constant(c).sub(&y.entry(i, j))
    });
}

/// Two-by-two symmetric block `[[TL, TR], [TR^T, BR]] >= 0` from entry
/// closures; `p` is the side of the top-left block, `q` of the bottom-right.
fn push_two_block_psd(
    mb: &mut ModelBuilder,
    p: usize,
    q: usize,
    tl: impl Fn(usize, usize) -> LinExpr,
    tr: impl Fn(usize, usize) -> LinExpr,
    br: impl Fn(usize, usize) -> LinExpr,
) {
    mb.push_psd(p + q, |i, j| {
        if i < p && j < p {
            tl(i, j)
        } else if i < p && j >= p {
            tr(i, j - p)
        } else {
            br(i - p, j - p)
        }
    });
}

/// Perspective relaxation of reduced-rank ridge regression:
/// `min (1/2m) ||Y - X beta||_F^2 + (1/2 gamma) tr(theta) + mu tr(W)`
/// with `W <= I` and `[[theta, beta], [beta^T, W]] >= 0`.
pub fn build_rrr_persp(inst: &RrrInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let (m, p, n) = inst.dims();
    let mut mb = ModelBuilder::new();
    let beta = mb.add_rect("beta", p, n);
    let theta = mb.add_sym("theta", p);
    let w = mb.add_sym("W", n);
    let t = mb.add_scalar("loss_t");

    mb.add_cost(t, 1.0);
    for i in 0..p {
        mb.add_cost(theta.packed_coord(i, i), 1.0 / (2.0 * inst.gamma));
    }
    for i in 0..n {
        mb.add_cost(w.packed_coord(i, i), inst.mu);
    }

    let mut residuals = Vec::with_capacity(m * n);
    for c in 0..n {
        for r in 0..m {
            let mut e = LinExpr::constant(inst.y_data[(r, c)]);
            for k in 0..p {
                let coef = inst.x_data[(r, k)];
                if coef != 0.0 {
                    e.terms.push((beta.coord(k, c), -coef));
                }
            }
            residuals.push(e);
        }
    }
    push_quadratic_epigraph(&mut mb, t, m as f64, residuals);

    push_two_block_psd(
        &mut mb,
        p,
        n,
        |i, j| theta.entry(i, j),
        |i, j| beta.entry(i, j),
        |i, j| w.entry(i, j),
    );
    push_bounded_by_identity(&mut mb, w);
    mb.finish()
}

/// Gram-matrix relaxation of reduced-rank ridge regression:
/// `min (1/2m)||Y||^2 - (1/m) <Y, X beta> + (1/2) <B, I/gamma + X^T X / m>
///  + mu tr(W)` with `[[B, beta], [beta^T, W]] >= 0`, `W <= I`.
pub fn build_rrr_dcl(inst: &RrrInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let (m, p, n) = inst.dims();
    let mf = m as f64;
    let mut mb = ModelBuilder::new();
    let beta = mb.add_rect("beta", p, n);
    let bgram = mb.add_sym("B", p);
    let w = mb.add_sym("W", n);

    mb.add_obj_const(inst.y_data.norm_squared() / (2.0 * mf));
    let xty = inst.x_data.transpose() * &inst.y_data; // p x n
    for c in 0..n {
        for r in 0..p {
            mb.add_cost(beta.coord(r, c), -xty[(r, c)] / mf);
        }
    }
    let gram = {
        let mut g = inst.x_data.transpose() * &inst.x_data / mf;
        for i in 0..p {
            g[(i, i)] += 1.0 / inst.gamma;
        }
        crate::specfun::symmetrize(&g)
    };
    let half_svec_g = svec(&gram) * 0.5;
    for k in 0..half_svec_g.len() {
        if half_svec_g[k] != 0.0 {
            mb.add_cost(bgram.offset + k, half_svec_g[k]);
        }
    }
    for i in 0..n {
        mb.add_cost(w.packed_coord(i, i), inst.mu);
    }

    push_two_block_psd(
        &mut mb,
        p,
        n,
        |i, j| bgram.entry(i, j),
        |i, j| beta.entry(i, j),
        |i, j| w.entry(i, j),
    );
    push_bounded_by_identity(&mut mb, w);
    mb.finish()
}

/// Nuclear-norm estimator: ridge loss plus `mu ||beta||_*`, the latter as
/// `mu/2 (tr U + tr V)` with `[[U, beta], [beta^T, V]] >= 0`.
pub fn build_rrr_nn(inst: &RrrInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let (m, p, n) = inst.dims();
    let mut mb = ModelBuilder::new();
    let beta = mb.add_rect("beta", p, n);
    let u = mb.add_sym("U", p);
    let v = mb.add_sym("V", n);
    let t_loss = mb.add_scalar("loss_t");
    let t_ridge = mb.add_scalar("ridge_t");

    mb.add_cost(t_loss, 1.0);
    mb.add_cost(t_ridge, 1.0);
    for i in 0..p {
        mb.add_cost(u.packed_coord(i, i), inst.mu / 2.0);
    }
    for i in 0..n {
        mb.add_cost(v.packed_coord(i, i), inst.mu / 2.0);
    }

    let mut residuals = Vec::with_capacity(m * n);
    for c in 0..n {
        for r in 0..m {
            let mut e = LinExpr::constant(inst.y_data[(r, c)]);
            for k in 0..p {
                let coef = inst.x_data[(r, k)];
                if coef != 0.0 {
                    e.terms.push((beta.coord(k, c), -coef));
                }
            }
            residuals.push(e);
        }
    }
    push_quadratic_epigraph(&mut mb, t_loss, m as f64, residuals);

    let ridge_resid: Vec<LinExpr> = (0..n)
        .flat_map(|c| (0..p).map(move |r| (r, c)))
        .map(|(r, c)| beta.entry(r, c))
        .collect();
    push_quadratic_epigraph(&mut mb, t_ridge, inst.gamma, ridge_resid);

    push_two_block_psd(
        &mut mb,
        p,
        n,
        |i, j| u.entry(i, j),
        |i, j| beta.entry(i, j),
        |i, j| v.entry(i, j),
    );
    mb.finish()
}

/// Symmetric matrix completion relaxation:
/// `min sum_obs (X_ij - A_ij)^2 + (1/2 gamma) tr(theta) + mu tr(Y)`
/// with `[[Y, X], [X, theta]] >= 0`, `0 <= Y <= I`.
pub fn build_matrix_completion(inst: &CompletionInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let n = inst.n;
    let mut mb = ModelBuilder::new();
    let y = mb.add_sym("Y", n);
    let x = mb.add_sym("X", n);
    let theta = mb.add_sym("theta", n);
    let t = mb.add_scalar("loss_t");

    mb.add_cost(t, 1.0);
    for i in 0..n {
        mb.add_cost(theta.packed_coord(i, i), 1.0 / (2.0 * inst.gamma));
        mb.add_cost(y.packed_coord(i, i), inst.mu);
    }

    // 2 * t * (1/2) >= sum residuals^2
    let residuals: Vec<LinExpr> = inst
        .observed
        .iter()
        .map(|&(i, j, v)| x.entry(i, j).plus_constant(-v))
        .collect();
    if !residuals.is_empty() {
        push_quadratic_epigraph(&mut mb, t, 0.5, residuals);
    } else {
        mb.push_nonneg_rows(&[LinExpr::var(t)]);
    }

    push_two_block_psd(
        &mut mb,
        n,
        n,
        |i, j| y.entry(i, j),
        |i, j| x.entry(i, j),
        |i, j| theta.entry(i, j),
    );
    push_bounded_by_identity(&mut mb, y);
    mb.finish()
}

/// Tensor completion relaxation: one `(X_i, Y_i, theta_i)` triple per mode
/// with `[[Y_i, X_i], [X_i^T, theta_i]] >= 0`, `0 <= Y_i <= I`,
/// `tr(Y_i) <= k_i`, equalities tying each unfolding to the shared
/// vectorized tensor, and objective
/// `sum_obs (T_idx - value)^2 + weight * sum_i tr(theta_i)`.
pub fn build_tensor_completion(inst: &TensorInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let dims = inst.dims;
    let total = dims.0 * dims.1 * dims.2;
    let mut mb = ModelBuilder::new();
    let tvar = mb.add_rect("T", total, 1);
    let t_loss = mb.add_scalar("loss_t");
    mb.add_cost(t_loss, 1.0);

    let ks = [inst.k.0, inst.k.1, inst.k.2];
    for mode in 1..=3usize {
        let (rows, cols) = unfold_shape(dims, mode);
        let xm = mb.add_rect(&format!("X{mode}"), rows, cols);
        let ym = mb.add_sym(&format!("Y{mode}"), rows);
        let thm = mb.add_sym(&format!("theta{mode}"), cols);
        for i in 0..cols {
            mb.add_cost(thm.packed_coord(i, i), inst.weight);
        }

        // tie the unfolding to the shared tensor variable
        let mut ties = Vec::with_capacity(total);
        for i1 in 0..dims.0 {
            for i2 in 0..dims.1 {
                for i3 in 0..dims.2 {
                    let (r, c) = unfold_position(dims, mode, (i1, i2, i3));
                    let lin = (i1 * dims.1 + i2) * dims.2 + i3;
                    ties.push(xm.entry(r, c).sub(&tvar.entry(lin, 0)));
                }
            }
        }
        mb.push_zero_rows(&ties);

        push_two_block_psd(
            &mut mb,
            rows,
            cols,
            |i, j| ym.entry(i, j),
            |i, j| xm.entry(i, j),
            |i, j| thm.entry(i, j),
        );
        push_bounded_by_identity(&mut mb, ym);
        let tr_bound = LinExpr::constant(ks[mode - 1] as f64).sub(&ym.trace());
        mb.push_nonneg_rows(&[tr_bound]);
    }

    let residuals: Vec<LinExpr> = inst
        .observed
        .iter()
        .map(|&(i1, i2, i3, v)| {
            let lin = (i1 * dims.1 + i2) * dims.2 + i3;
            tvar.entry(lin, 0).plus_constant(-v)
        })
        .collect();
    if !residuals.is_empty() {
        push_quadratic_epigraph(&mut mb, t_loss, 0.5, residuals);
    } else {
        mb.push_nonneg_rows(&[LinExpr::var(t_loss)]);
    }
    mb.finish()
}

/// Doubly non-negative relaxation of nonnegative low-rank factorization:
/// `min (1/2) tr(theta) - <X, A> + (1/2) ||A||_F^2` with
/// `[[Y, X], [X^T, theta]] >= 0`, `Y <= I`, `tr(Y) <= k`, `X` PSD and
/// entrywise nonnegative.
pub fn build_nmf_dnn(inst: &NmfInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let n = inst.n();
    let a = inst.a_sym();
    let mut mb = ModelBuilder::new();
    let y = mb.add_sym("Y", n);
    let x = mb.add_sym("X", n);
    let theta = mb.add_sym("theta", n);

    mb.add_obj_const(0.5 * a.norm_fro().powi(2));
    for i in 0..n {
        mb.add_cost(theta.packed_coord(i, i), 0.5);
    }
    let sa = svec(&a);
    for k in 0..sa.len() {
        if sa[k] != 0.0 {
            mb.add_cost(x.offset + k, -sa[k]);
        }
    }

    push_two_block_psd(
        &mut mb,
        n,
        n,
        |i, j| y.entry(i, j),
        |i, j| x.entry(i, j),
        |i, j| theta.entry(i, j),
    );
    push_bounded_by_identity(&mut mb, y);
    mb.push_nonneg_rows(&[LinExpr::constant(inst.k as f64).sub(&y.trace())]);
    // X PSD
    mb.push_psd(n, |i, j| x.entry(i, j));
    // X entrywise nonnegative (upper triangle suffices by symmetry)
    let nn: Vec<LinExpr> = (0..n)
        .flat_map(|j| (0..=j).map(move |i| (i, j)))
        .map(|(i, j)| x.entry(i, j))
        .collect();
    mb.push_nonneg_rows(&nn);
    mb.finish()
}

/// Exact convex reformulation of rank-k approximation:
/// `min (1/2) tr(theta) - <A, X> + (1/2) ||A||_F^2` with `Y <= I`,
/// `tr(Y) <= k`, `[[theta, X], [X^T, Y]] >= 0`.
pub fn build_rank_k_svd(a: &DMatrix<f64>, k: usize) -> Result<BuiltModel> {
    let inst = SvdInstance {
        schema_version: 1,
        a: a.clone(),
        k,
    };
    inst.validate()?;
    let (r, c) = (a.nrows(), a.ncols());
    let mut mb = ModelBuilder::new();
    let x = mb.add_rect("X", r, c);
    let theta = mb.add_sym("theta", r);
    let y = mb.add_sym("Y", c);

    mb.add_obj_const(0.5 * a.norm_squared());
    for i in 0..r {
        mb.add_cost(theta.packed_coord(i, i), 0.5);
    }
    for j in 0..c {
        for i in 0..r {
            if a[(i, j)] != 0.0 {
                mb.add_cost(x.coord(i, j), -a[(i, j)]);
            }
        }
    }

    push_two_block_psd(
        &mut mb,
        r,
        c,
        |i, j| theta.entry(i, j),
        |i, j| x.entry(i, j),
        |i, j| y.entry(i, j),
    );
    push_bounded_by_identity(&mut mb, y);
    mb.push_nonneg_rows(&[LinExpr::constant(k as f64).sub(&y.trace())]);
    mb.finish()
}

/// Handles to the epigraph block for the sum of the `k` largest eigenvalues.
#[derive(Debug, Clone, Copy)]
pub struct TopKEpigraph {
    /// Epigraph scalar: `t >= S_k(X)` over the block.
    pub t: usize,
    /// Threshold scalar (free sign).
    pub s: usize,
    /// Slack matrix.
    pub z: SymVar,
}

/// Attaches the epigraph block `t >= k s + tr(Z)`, `Z + s I >= X`, `Z >= 0`
/// for the sum of the `k` largest eigenvalues of the affine symmetric
/// matrix given entrywise by `x_entry`. Minimizing `t` at fixed `X`
/// recovers the sum of its `k` top eigenvalues.
pub fn build_sum_top_k_epigraph(
    mb: &mut ModelBuilder,
    n: usize,
    k: usize,
    label: &str,
    x_entry: impl Fn(usize, usize) -> LinExpr,
) -> Result<TopKEpigraph> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    let t = mb.add_scalar(&format!("{label}_t"));
    let s = mb.add_scalar(&format!("{label}_s"));
    let z = mb.add_sym(&format!("{label}_Z"), n);
    // t - k s - tr(Z) >= 0
    let row = LinExpr::var(t)
        .sub(&LinExpr::term(s, k as f64))
        .sub(&z.trace());
    mb.push_nonneg_rows(&[row]);
    // Z + s I - X >= 0
    mb.push_psd(n, |i, j| {
        let mut e = z.entry(i, j);
        if i == j {
            e = e.add(&LinExpr::var(s));
        }
        e.sub(&x_entry(i, j))
    });
    // Z >= 0
    mb.push_psd(n, |i, j| z.entry(i, j));
    Ok(TopKEpigraph { t, s, z })
}

/// Standalone model minimizing the epigraph variable at a fixed matrix;
/// its optimum is the sum of the `k` largest eigenvalues of `x`.
pub fn build_sum_top_k_model(x: &SymMatrix, k: usize) -> Result<BuiltModel> {
    let mut mb = ModelBuilder::new();
    let handles = build_sum_top_k_epigraph(&mut mb, x.n(), k, "topk", |i, j| {
        LinExpr::constant(x.entry(i, j))
    })?;
    mb.add_cost(handles.t, 1.0);
    mb.finish()
}

/// Low-rank plus diagonal decomposition at power 2, with the span split
/// `(Y_1, Y_2) = (I - P, P)` fixed from the projector `P` onto the top-k
/// eigenvectors of `Sigma` (the exact formulation couples the split to the
/// variables bilinearly; fixing it keeps a valid convex bound). Residual
/// blocks `[[theta_i, M_i], [M_i^T, Y_i]] >= 0` encode each
/// perspective-of-square term, with `M_1 = Y_1 Sigma Y_1 - beta - Phi` and
/// `M_2 = Y_2 Sigma Y_2 + beta - X`, and the spectral bound enters as the
/// pair `X <= M Y_2`, `-X <= M Y_2`.
pub fn build_factor_analysis_q2(inst: &FactorInstance) -> Result<BuiltModel> {
    inst.validate()?;
    let n = inst.n();
    let sigma = inst.sigma_sym();
    let eig = sym_eig(&sigma);
    // projector onto the top-k eigenvectors
    let mut proj = DMatrix::zeros(n, n);
    for c in 0..inst.k {
        let u = eig.basis.column(c);
        proj += u * u.transpose();
    }
    let y2 = crate::specfun::symmetrize(&proj);
    let y1 = SymMatrix::identity(n).sub(&y2);
    let c1 = crate::specfun::symmetrize(&(y1.as_matrix() * sigma.as_matrix() * y1.as_matrix()));
    let c2 = crate::specfun::symmetrize(&(y2.as_matrix() * sigma.as_matrix() * y2.as_matrix()));

    let mut mb = ModelBuilder::new();
    let x = mb.add_sym("X", n);
    let phi = mb.add_rect("Phi", n, 1);
    let beta = mb.add_sym("beta", n);
    let th1 = mb.add_sym("theta1", n);
    let th2 = mb.add_sym("theta2", n);

    for i in 0..n {
        mb.add_cost(th1.packed_coord(i, i), 1.0);
        mb.add_cost(th2.packed_coord(i, i), 1.0);
    }

    // Phi >= 0 (diagonal entries)
    let phirows: Vec<LinExpr> = (0..n).map(|i| phi.entry(i, 0)).collect();
    mb.push_nonneg_rows(&phirows);
    // X >= 0
    mb.push_psd(n, |i, j| x.entry(i, j));
    // M Y2 - X >= 0 and M Y2 + X >= 0
    mb.push_psd(n, |i, j| {
        LinExpr::constant(inst.m_bound * y2.entry(i, j)).sub(&x.entry(i, j))
    });
    mb.push_psd(n, |i, j| {
        LinExpr::constant(inst.m_bound * y2.entry(i, j)).add(&x.entry(i, j))
    });

    // residual blocks
    let m1 = |i: usize, j: usize| {
        let mut e = LinExpr::constant(c1.entry(i, j)).sub(&beta.entry(i, j));
        if i == j {
            e = e.sub(&phi.entry(i, 0));
        }
        e
    };
    let m2 = |i: usize, j: usize| {
        LinExpr::constant(c2.entry(i, j))
            .add(&beta.entry(i, j))
            .sub(&x.entry(i, j))
    };
    push_two_block_psd(
        &mut mb,
        n,
        n,
        |i, j| th1.entry(i, j),
        m1,
        |i, j| LinExpr::constant(y1.entry(i, j)),
    );
    push_two_block_psd(
        &mut mb,
        n,
        n,
        |i, j| th2.entry(i, j),
        m2,
        |i, j| LinExpr::constant(y2.entry(i, j)),
    );
    mb.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{constraint_violation, solve, SolveSettings};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn settings() -> SolveSettings {
        SolveSettings::with_tol(1e-7)
    }

    fn rrr(x: DMatrix<f64>, y: DMatrix<f64>, gamma: f64, mu: f64) -> RrrInstance {
        RrrInstance {
            schema_version: 1,
            x_data: x,
            y_data: y,
            gamma,
            mu,
        }
    }

    fn rank_of(m: &DMatrix<f64>, tol: f64) -> usize {
        m.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > tol)
            .count()
    }

    #[test]
    fn rrr_persp_zero_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>() - 0.5);
        let inst = rrr(x, DMatrix::zeros(6, 2), 2.0, 0.3);
        let model = build_rrr_persp(&inst).unwrap();
        assert!(model.varmap_covers());
        let sol = solve(&model.problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-5);
        let beta = model
            .extract_one(&sol.x, "beta")
            .unwrap()
            .as_matrix()
            .unwrap()
            .clone();
        assert!(beta.amax() < 1e-3);
    }

    #[test]
    fn rrr_persp_scalar_matches_grid_oracle() {
        // p = n = 1: minimize (1/2m)||y - x b||^2 + b^2 / (2 gamma w) + mu w
        // over b and w in [0, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(8, 1, |_, _| rng.random::<f64>() + 0.5);
        let y = DMatrix::from_fn(8, 1, |_, _| rng.random::<f64>());
        let (gamma, mu) = (0.8, 0.05);
        let inst = rrr(x.clone(), y.clone(), gamma, mu);
        let model = build_rrr_persp(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();

        let m = 8.0;
        let mut best = f64::INFINITY;
        for bi in -400..=400 {
            let b = bi as f64 / 100.0;
            let loss: f64 = (0..8)
                .map(|r| (y[(r, 0)] - x[(r, 0)] * b).powi(2))
                .sum::<f64>()
                / (2.0 * m);
            for wi in 0..=1000 {
                let w = wi as f64 / 1000.0;
                let pen = if w == 0.0 {
                    if b.abs() < 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    b * b / (2.0 * gamma * w)
                };
                let total = loss + pen + mu * w;
                if total < best {
                    best = total;
                }
            }
        }
        assert!(
            (sol.objective - best).abs() <= 2e-4 * (1.0 + best.abs()),
            "solver {} vs oracle {best}",
            sol.objective
        );
    }

    fn ridge_solution(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
        let m = x.nrows() as f64;
        let p = x.ncols();
        let g = x.transpose() * x + DMatrix::identity(p, p) * (m / gamma);
        let rhs = x.transpose() * y;
        g.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn rrr_ordering_and_feasible_upper_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let (m, p, n, k_true) = (8, 4, 3, 1);
            let u = DMatrix::from_fn(p, k_true, |_, _| rng.random::<f64>() - 0.5);
            let v = DMatrix::from_fn(n, k_true, |_, _| rng.random::<f64>() - 0.5);
            let beta_true = &u * v.transpose();
            let x = DMatrix::from_fn(m, p, |_, _| rng.random::<f64>() - 0.5);
            let y = &x * &beta_true;
            let (gamma, mu) = (10.0, 0.1);
            let inst = rrr(x.clone(), y.clone(), gamma, mu);

            let persp = solve(&build_rrr_persp(&inst).unwrap().problem, &settings()).unwrap();
            let dcl = solve(&build_rrr_dcl(&inst).unwrap().problem, &settings()).unwrap();
            assert!(
                persp.objective <= dcl.objective + 1e-5,
                "trial {trial}: persp {} > dcl {}",
                persp.objective,
                dcl.objective
            );

            // feasible point: truncated SVD of the ridge solution
            let ridge = ridge_solution(&x, &y, gamma);
            let bk = crate::algos::truncated_svd(&ridge, k_true).unwrap();
            let rank = rank_of(&bk, 1e-4);
            let loss = (&y - &x * &bk).norm_squared() / (2.0 * m as f64);
            let fval = loss + bk.norm_squared() / (2.0 * gamma) + mu * rank as f64;
            assert!(dcl.objective <= fval + 1e-5, "dcl exceeds feasible value");
            assert!(persp.objective <= fval + 1e-5);
        }
    }

    #[test]
    fn rrr_nn_mu_zero_is_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(7, 3, |_, _| rng.random::<f64>() - 0.5);
        let y = DMatrix::from_fn(7, 2, |_, _| rng.random::<f64>() - 0.5);
        let gamma = 1.5;
        let inst = rrr(x.clone(), y.clone(), gamma, 0.0);
        let model = build_rrr_nn(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        let ridge = ridge_solution(&x, &y, gamma);
        let oracle = (&y - &x * &ridge).norm_squared() / (2.0 * 7.0)
            + ridge.norm_squared() / (2.0 * gamma);
        assert!((sol.objective - oracle).abs() <= 1e-4 * (1.0 + oracle.abs()));
    }

    #[test]
    fn rrr_nn_scalar_soft_threshold() {
        // 1-D: min (1/2m)(y - x b)^2 + b^2/(2 gamma) + mu |b|
        let (xv, yv, gamma, mu, m) = (1.25, 0.9, 2.0, 0.07, 1.0);
        let inst = rrr(
            DMatrix::from_element(1, 1, xv),
            DMatrix::from_element(1, 1, yv),
            gamma,
            mu,
        );
        let sol = solve(&build_rrr_nn(&inst).unwrap().problem, &settings()).unwrap();
        // closed form: soft threshold on the linear coefficient
        let a2 = xv * xv / (2.0 * m) + 1.0 / (2.0 * gamma);
        let lin = xv * yv / m;
        let b = ((lin - mu).max(0.0) - (-lin - mu).max(0.0)) / (2.0 * a2);
        let oracle = (yv - xv * b).powi(2) / (2.0 * m) + b * b / (2.0 * gamma) + mu * b.abs();
        assert!(
            (sol.objective - oracle).abs() <= 1e-5 * (1.0 + oracle.abs()),
            "got {} want {oracle}",
            sol.objective
        );
    }

    #[test]
    fn completion_recovers_diagonal() {
        // fully observed diagonal matrix, large gamma, mu = 0
        let n = 3;
        let mut obs = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = if i == j { (i + 1) as f64 } else { 0.0 };
                obs.push((i, j, v));
            }
        }
        let inst = CompletionInstance {
            schema_version: 1,
            n,
            observed: obs,
            gamma: 1e6,
            mu: 0.0,
        };
        let model = build_matrix_completion(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        let x = model
            .extract_one(&sol.x, "X")
            .unwrap()
            .as_matrix()
            .unwrap()
            .clone();
        for i in 0..n {
            assert_abs_diff_eq!(x[(i, i)], (i + 1) as f64, epsilon = 1e-3);
        }
        assert!(constraint_violation(&model.problem, &sol.x) < 5e-6);
    }

    #[test]
    fn completion_no_observations() {
        let inst = CompletionInstance {
            schema_version: 1,
            n: 3,
            observed: vec![],
            gamma: 1.0,
            mu: 0.5,
        };
        let sol = solve(&build_matrix_completion(&inst).unwrap().problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn completion_rejects_bad_instances() {
        let bad = CompletionInstance {
            schema_version: 1,
            n: 2,
            observed: vec![(1, 0, 1.0)],
            gamma: 1.0,
            mu: 0.0,
        };
        assert!(bad.validate().is_err());
        let dup = CompletionInstance {
            schema_version: 1,
            n: 2,
            observed: vec![(0, 1, 1.0), (0, 1, 2.0)],
            gamma: 1.0,
            mu: 0.0,
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn unfold_fold_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dims = (2, 3, 4);
        let mut t = Tensor3::zeros(dims);
        for v in t.data.iter_mut() {
            *v = rng.random();
        }
        for mode in 1..=3 {
            let m = unfold(&t, mode).unwrap();
            let back = fold(&m, mode, dims).unwrap();
            assert_eq!(back, t);
        }
        // all-ones tensor unfolds to all-ones matrices
        let ones = Tensor3 {
            dims: (2, 2, 2),
            data: vec![1.0; 8],
        };
        for mode in 1..=3 {
            let m = unfold(&ones, mode).unwrap();
            assert_eq!(m.nrows(), 2);
            assert_eq!(m.ncols(), 4);
            assert!(m.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn unfold_rank_one_tensor() {
        let u = [1.0, -2.0];
        let v = [0.5, 1.5, -1.0];
        let w = [2.0, 0.25];
        let dims = (2, 3, 2);
        let mut t = Tensor3::zeros(dims);
        for i1 in 0..2 {
            for i2 in 0..3 {
                for i3 in 0..2 {
                    t.set(i1, i2, i3, u[i1] * v[i2] * w[i3]);
                }
            }
        }
        for mode in 1..=3 {
            let m = unfold(&t, mode).unwrap();
            assert_eq!(rank_of(&m, 1e-10), 1, "unfolding must be rank one");
        }
    }

    #[test]
    fn tensor_completion_zero_and_rank_one() {
        // all entries observed as zero
        let dims = (2, 2, 2);
        let observed: Vec<(usize, usize, usize, f64)> = (0..2)
            .flat_map(|a| (0..2).flat_map(move |b| (0..2).map(move |c| (a, b, c, 0.0))))
            .collect();
        let inst = TensorInstance {
            schema_version: 1,
            dims,
            observed,
            k: (1, 1, 1),
            weight: 1.0,
        };
        let sol = solve(&build_tensor_completion(&inst).unwrap().problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-5);

        // rank-one tensor: relaxation value at most the exact certificate
        let u = [1.0, 0.5];
        let v = [0.8, -0.3];
        let w = [1.2, 0.4];
        let mut obs = Vec::new();
        let mut tt = Tensor3::zeros(dims);
        for i1 in 0..2 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    let val = u[i1] * v[i2] * w[i3];
                    tt.set(i1, i2, i3, val);
                    obs.push((i1, i2, i3, val));
                }
            }
        }
        let inst = TensorInstance {
            schema_version: 1,
            dims,
            observed: obs,
            k: (1, 1, 1),
            weight: 1.0,
        };
        let model = build_tensor_completion(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        let mut cert = 0.0;
        for mode in 1..=3 {
            let m = unfold(&tt, mode).unwrap();
            cert += m.norm_squared();
        }
        assert!(
            sol.objective <= cert + 1e-4,
            "relaxation {} above certificate {cert}",
            sol.objective
        );
        assert!(sol.objective >= -1e-6);
    }

    #[test]
    fn nmf_dnn_zero_and_rank_one() {
        let zero = NmfInstance {
            schema_version: 1,
            a: DMatrix::zeros(3, 3),
            k: 1,
        };
        let sol = solve(&build_nmf_dnn(&zero).unwrap().problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = 1e-6);

        // A = u u^T with u >= 0: exact completely positive case, optimum 0
        let u = DVector::from_column_slice(&[0.6, 1.1, 0.3]);
        let a = &u * u.transpose();
        let inst = NmfInstance {
            schema_version: 1,
            a,
            k: 1,
        };
        let sol = solve(&build_nmf_dnn(&inst).unwrap().problem, &settings()).unwrap();
        assert!(sol.objective.abs() <= 1e-4, "objective {}", sol.objective);
    }

    #[test]
    fn rank_k_svd_diagonal_case() {
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 2.0, 1.0]));
        let model = build_rank_k_svd(&a, 2).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 0.5, epsilon = 2e-5);
        // k >= rank(A) gives zero
        let model = build_rank_k_svd(&a, 3).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        assert!(sol.objective.abs() <= 2e-5);
    }

    #[test]
    fn rank_k_svd_matches_truncation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..5 {
            let (r, c) = (5, 4);
            let a = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let k = 1 + trial % 3;
            let model = build_rank_k_svd(&a, k).unwrap();
            let sol = solve(&model.problem, &settings()).unwrap();
            let ak = crate::algos::truncated_svd(&a, k).unwrap();
            let oracle = 0.5 * (&a - &ak).norm_squared();
            assert!(
                (sol.objective - oracle).abs() <= 1e-4 * (1.0 + oracle),
                "trial {trial}: got {} want {oracle}",
                sol.objective
            );
        }
    }

    #[test]
    fn top_k_epigraph_matches_eigen_sum() {
        let x = SymMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let model = build_sum_top_k_model(&x, 2).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 5.0, epsilon = 1e-5);

        let i4 = SymMatrix::identity(4);
        let sol = solve(&build_sum_top_k_model(&i4, 4).unwrap().problem, &settings()).unwrap();
        assert_abs_diff_eq!(sol.objective, 4.0, epsilon = 1e-5);
    }

    #[test]
    fn factor_analysis_diagonal_and_rank_one() {
        // diagonal Sigma with k = 0: X = 0, Phi absorbs the diagonal
        let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0, 0.5]));
        let inst = FactorInstance {
            schema_version: 1,
            sigma,
            k: 0,
            m_bound: 5.0,
        };
        let model = build_factor_analysis_q2(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        assert!(sol.objective.abs() <= 1e-5, "objective {}", sol.objective);

        // Sigma = u u^T with k = 1 and M >= ||u||^2: exact decomposition
        let u = DVector::from_column_slice(&[1.0, -0.5, 0.25]);
        let sigma = &u * u.transpose();
        let inst = FactorInstance {
            schema_version: 1,
            sigma,
            k: 1,
            m_bound: 2.0,
        };
        let model = build_factor_analysis_q2(&inst).unwrap();
        let sol = solve(&model.problem, &settings()).unwrap();
        assert!(sol.objective.abs() <= 1e-4, "objective {}", sol.objective);
    }

    #[test]
    fn extraction_round_trip_satisfies_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>() - 0.5);
        let y = DMatrix::from_fn(6, 2, |_, _| rng.random::<f64>() - 0.5);
        let inst = rrr(x, y, 3.0, 0.2);
        let model = build_rrr_dcl(&inst).unwrap();
        assert!(model.varmap_covers());
        let sol = solve(&model.problem, &SolveSettings::default()).unwrap();
        let extracted = model.extract(&sol.x);
        assert!(extracted.contains_key("beta"));
        assert!(extracted.contains_key("B"));
        assert!(extracted.contains_key("W"));
        assert!(constraint_violation(&model.problem, &sol.x) <= 5e-6);
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = RrrInstance {
            schema_version: 1,
            x_data: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            y_data: DMatrix::from_row_slice(2, 1, &[0.5, -0.5]),
            gamma: 1e6,
            mu: 0.1,
        };
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.contains("\"X\""));
        assert!(text.contains("schema_version"));
        let back: RrrInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back.x_data, inst.x_data);
        assert_eq!(back.gamma, inst.gamma);
    }
}
