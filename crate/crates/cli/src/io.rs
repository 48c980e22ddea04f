//! JSON point schemas for the hull-check and cut-demo subcommands, and
//! the solution file writer.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use lowrank_core::models::{BuiltModel, ExtractedVar};
use lowrank_core::specfun::{ScalarFunctionSpec, SymMatrix};

use crate::CliError;

fn default_version() -> u32 {
    1
}

fn default_tol() -> f64 {
    1e-7
}

pub(crate) fn to_sym(rows: &[Vec<f64>]) -> Result<SymMatrix, CliError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Validation("matrix must be square".into()));
    }
    SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        .map_err(|e| CliError::Validation(e.to_string()))
}

/// Query point for the spectral-sublevel hull.
#[derive(Debug, Serialize, Deserialize)]
pub struct TPoint {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub t: f64,
    pub omega: ScalarFunctionSpec,
    pub mu: f64,
    pub k: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

/// Query point for the bounded quadratic-epigraph hull.
#[derive(Debug, Serialize, Deserialize)]
pub struct SPoint {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub y: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub l: f64,
    pub u: f64,
    pub k: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

/// One block of a weighted composition query.
#[derive(Debug, Serialize, Deserialize)]
pub struct QPointBlock {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub l: f64,
    pub u: f64,
    pub k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QPoint {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub rho: f64,
    pub blocks: Vec<QPointBlock>,
    pub weights: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

/// Query point for the scalar closure.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScalarPoint {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub d: f64,
    pub q: f64,
    pub m_bound: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

/// Base point for cut generation: a scalar or a symmetric matrix.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutBase {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CutQuery {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub xbar: CutBase,
    #[serde(default)]
    pub c: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serializes a solved model: status, objective, residuals, and every
/// named variable from the map.
pub fn solution_json(
    model_name: &str,
    model: &BuiltModel,
    sol: &lowrank_core::conic::Solution,
) -> serde_json::Value {
    let mut vars = serde_json::Map::new();
    for (name, value) in model.extract(&sol.x) {
        let v = match value {
            ExtractedVar::Scalar(s) => json!(s),
            ExtractedVar::Matrix(m) => json!(matrix_rows(&m)),
        };
        vars.insert(name, v);
    }
    json!({
        "schema_version": 1,
        "model": model_name,
        "status": sol.status,
        "objective": sol.objective,
        "dual_objective": sol.dual_objective,
        "primal_res": sol.primal_res,
        "dual_res": sol.dual_res,
        "gap": sol.gap,
        "iterations": sol.iterations,
        "variables": vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_point_parses_with_defaults() {
        let text = r#"{
            "x": [[1.0, 0.0], [0.0, 0.0]],
            "y": [[1.0, 0.0], [0.0, 0.0]],
            "t": 1.5,
            "omega": {"kind": "square"},
            "mu": 0.1,
            "k": 1
        }"#;
        let p: TPoint = serde_json::from_str(text).unwrap();
        assert_eq!(p.schema_version, 1);
        assert_eq!(p.tol, 1e-7);
        assert!(matches!(p.omega, ScalarFunctionSpec::Square));
    }

    #[test]
    fn cut_base_accepts_both_shapes() {
        let s: CutQuery = serde_json::from_str(r#"{"xbar": 1.25}"#).unwrap();
        assert!(matches!(s.xbar, CutBase::Scalar(v) if v == 1.25));
        let m: CutQuery =
            serde_json::from_str(r#"{"xbar": [[1.0, 0.0], [0.0, 2.0]], "c": 0.5}"#).unwrap();
        assert!(matches!(m.xbar, CutBase::Matrix(_)));
        assert_eq!(m.c, 0.5);
    }
}
