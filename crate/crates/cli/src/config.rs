//! Experiment configuration and result-row plumbing.
//!
//! Result files have a fixed column set and order per experiment family;
//! re-running an identical configuration reproduces every column except
//! `wall_s` byte-for-byte.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rrr,
    Nmf,
    Dopt,
    Svd,
    Hull,
    Cuts,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Rrr => "rrr",
            ExperimentKind::Nmf => "nmf",
            ExperimentKind::Dopt => "dopt",
            ExperimentKind::Svd => "svd",
            ExperimentKind::Hull => "hull",
            ExperimentKind::Cuts => "cuts",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "rrr" => ExperimentKind::Rrr,
            "nmf" => ExperimentKind::Nmf,
            "dopt" => ExperimentKind::Dopt,
            "svd" => ExperimentKind::Svd,
            "hull" => ExperimentKind::Hull,
            "cuts" => ExperimentKind::Cuts,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown experiment kind '{other}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    50_000
}

fn default_version() -> u32 {
    1
}

/// Experiment configuration. Unset dimensional fields fall back to the
/// per-family desk-scale defaults documented on the drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    /// Optional; must match the kind requested on the command line.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub k_true: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Rank-penalty grid; default 20 points uniform in log-space over
    /// `[1e-4, 1e4]`.
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
    /// Target-rank sweep for factorization/selection experiments.
    #[serde(default)]
    pub k_list: Option<Vec<usize>>,
    #[serde(default)]
    pub eps: Option<f64>,
    /// Out-of-sample rows for regression experiments.
    #[serde(default)]
    pub m_test: Option<usize>,
    /// Restrict regression methods (`persp`, `dcl`, `nn`); default all.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    /// Sample count for the hull/cut property suites.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Per-axis size of the closure agreement grid.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub brute_force: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: 1,
            experiment: None,
            seeds: default_seeds(),
            n: None,
            p: None,
            m: None,
            k_true: None,
            sigma: None,
            gamma: None,
            mu_grid: None,
            k_list: None,
            eps: None,
            m_test: None,
            methods: None,
            samples: None,
            grid: None,
            brute_force: false,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seed list must be nonempty".into()));
        }
        if let Some(cfg_kind) = self.experiment {
            if cfg_kind != kind {
                return Err(CliError::Validation(format!(
                    "config is for '{cfg_kind}' but '{kind}' was requested"
                )));
            }
        }
        if let Some(grid) = &self.mu_grid {
            if grid.iter().any(|&v| v <= 0.0) {
                return Err(CliError::Validation(
                    "mu grid values must be positive".into(),
                ));
            }
        }
        if self.tol <= 0.0 || self.max_iter == 0 {
            return Err(CliError::Validation(
                "tol must be positive and max_iter nonzero".into(),
            ));
        }
        Ok(())
    }

    /// Default rank-penalty grid: 20 points uniform in log-space over
    /// `[1e-4, 1e4]`.
    pub fn mu_grid_or_default(&self) -> Vec<f64> {
        self.mu_grid.clone().unwrap_or_else(|| {
            (0..20)
                .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 19.0))
                .collect()
        })
    }
}

/// One output row. Fields not used by an experiment family stay `None`
/// and never appear in its CSV schema.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oos_mse_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failures: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Wall-clock seconds; the one column excluded from reproducibility.
    pub wall_s: f64,
}

impl ResultRow {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        ResultRow {
            experiment: kind.to_string(),
            seed,
            ..Default::default()
        }
    }

    /// Stable ordering key: seed, then method/suite, then sweep position.
    pub fn sort_key(&self) -> (u64, String, u64, u64) {
        (
            self.seed,
            format!(
                "{}|{}",
                self.method.clone().unwrap_or_default(),
                self.suite.clone().unwrap_or_default()
            ),
            self.k.unwrap_or(0) as u64,
            self.mu.unwrap_or(0.0).to_bits(),
        )
    }
}

/// Fixed CSV schema per experiment family.
pub fn columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Rrr => &[
            "experiment",
            "seed",
            "method",
            "mu",
            "objective",
            "rank",
            "accuracy",
            "val_mse",
            "oos_mse_ratio",
            "status",
            "iterations",
            "wall_s",
        ],
        ExperimentKind::Nmf => &[
            "experiment",
            "seed",
            "method",
            "k",
            "objective",
            "bound",
            "gap",
            "status",
            "iterations",
            "wall_s",
        ],
        ExperimentKind::Dopt => &[
            "experiment",
            "seed",
            "method",
            "k",
            "objective",
            "bound",
            "gap",
            "wall_s",
        ],
        ExperimentKind::Svd => &[
            "experiment",
            "seed",
            "method",
            "k",
            "objective",
            "bound",
            "gap",
            "status",
            "iterations",
            "wall_s",
        ],
        ExperimentKind::Hull | ExperimentKind::Cuts => &[
            "experiment",
            "seed",
            "suite",
            "samples",
            "failures",
            "max_violation",
            "wall_s",
        ],
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field(row: &ResultRow, name: &str) -> String {
    match name {
        "experiment" => row.experiment.clone(),
        "seed" => row.seed.to_string(),
        "method" => row.method.clone().unwrap_or_default(),
        "suite" => row.suite.clone().unwrap_or_default(),
        "k" => fmt_opt_usize(row.k),
        "mu" => fmt_opt_f64(row.mu),
        "objective" => fmt_opt_f64(row.objective),
        "bound" => fmt_opt_f64(row.bound),
        "rank" => fmt_opt_usize(row.rank),
        "gap" => fmt_opt_f64(row.gap),
        "accuracy" => fmt_opt_f64(row.accuracy),
        "val_mse" => fmt_opt_f64(row.val_mse),
        "oos_mse_ratio" => fmt_opt_f64(row.oos_mse_ratio),
        "samples" => fmt_opt_usize(row.samples),
        "failures" => fmt_opt_usize(row.failures),
        "max_violation" => fmt_opt_f64(row.max_violation),
        "status" => row.status.clone().unwrap_or_default(),
        "iterations" => fmt_opt_usize(row.iterations),
        "wall_s" => format!("{:.3}", row.wall_s),
        other => panic!("unknown column {other}"),
    }
}

pub fn write_csv(
    out: &mut dyn Write,
    kind: ExperimentKind,
    rows: &[ResultRow],
) -> std::io::Result<()> {
    let cols = columns(kind);
    writeln!(out, "{}", cols.join(","))?;
    for row in rows {
        let line: Vec<String> = cols.iter().map(|c| field(row, c)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_json(out: &mut dyn Write, rows: &[ResultRow]) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    writeln!(out, "{text}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.seeds.len(), 20);
        assert!(cfg.validate(ExperimentKind::Rrr).is_ok());
        let grid = cfg.mu_grid_or_default();
        assert_eq!(grid.len(), 20);
        assert!((grid[0] - 1e-4).abs() < 1e-12);
        assert!((grid[19] - 1e4).abs() / 1e4 < 1e-10);

        let empty = ExperimentConfig {
            seeds: vec![],
            ..Default::default()
        };
        assert!(empty.validate(ExperimentKind::Rrr).is_err());

        let mismatched = ExperimentConfig {
            experiment: Some(ExperimentKind::Nmf),
            ..Default::default()
        };
        assert!(mismatched.validate(ExperimentKind::Rrr).is_err());
    }

    #[test]
    fn csv_schema_is_fixed() {
        let mut row = ResultRow::new(ExperimentKind::Dopt, 3);
        row.method = Some("greedy".into());
        row.k = Some(2);
        row.objective = Some(-27.5);
        row.wall_s = 0.2;
        let mut buf = Vec::new();
        write_csv(&mut buf, ExperimentKind::Dopt, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,seed,method,k,objective,bound,gap,wall_s"
        );
        assert!(lines.next().unwrap().starts_with("dopt,3,greedy,2,-27.5"));
    }

    #[test]
    fn config_json_round_trip() {
        let text = r#"{"experiment": "dopt", "seeds": [1, 2], "n": 8, "m": 12, "brute_force": true}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.experiment, Some(ExperimentKind::Dopt));
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert!(cfg.brute_force);
        assert!(cfg.validate(ExperimentKind::Dopt).is_ok());
        let back = serde_json::to_string(&cfg).unwrap();
        let again: ExperimentConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(again.seeds, cfg.seeds);
    }

    #[test]
    fn unknown_config_fields_rejected() {
        let text = r#"{"seeds": [1], "not_a_field": 3}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }
}
