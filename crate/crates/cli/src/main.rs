//! `lowrank`: build and solve low-rank relaxations, run experiment
//! sweeps, and query hull membership and perspective cuts.
//!
//! Exit codes: 0 on success, 2 on validation or IO errors, 3 when the
//! solver fails to reach optimality on a solve subcommand.

use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;

use lowrank_cli::config::{write_csv, write_json, ExperimentConfig, ExperimentKind, OutputFormat};
use lowrank_cli::experiments::{build_named_model, run_experiment};
use lowrank_cli::io::{
    solution_json, to_sym, CutBase, CutQuery, QPoint, SPoint, ScalarPoint, TPoint,
};
use lowrank_cli::CliError;
use lowrank_core::conic::{solve, SolveSettings, SolveStatus};
use lowrank_core::cuts::{matrix_perspective_cut, perspective_cut};
use lowrank_core::hulls::{
    hull_membership_q, hull_membership_s, hull_membership_t, scalar_closure_membership, QBlock,
};
use lowrank_core::specfun::ScalarFunctionSpec;

#[derive(Parser)]
#[command(name = "lowrank", version, about = "Low-rank relaxation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelName {
    #[value(name = "rrr-persp")]
    RrrPersp,
    #[value(name = "rrr-dcl")]
    RrrDcl,
    #[value(name = "rrr-nn")]
    RrrNn,
    Completion,
    Tensor,
    #[value(name = "nmf-dnn")]
    NmfDnn,
    Svd,
    #[value(name = "factor-q2")]
    FactorQ2,
}

impl ModelName {
    fn as_str(&self) -> &'static str {
        match self {
            ModelName::RrrPersp => "rrr-persp",
            ModelName::RrrDcl => "rrr-dcl",
            ModelName::RrrNn => "rrr-nn",
            ModelName::Completion => "completion",
            ModelName::Tensor => "tensor",
            ModelName::NmfDnn => "nmf-dnn",
            ModelName::Svd => "svd",
            ModelName::FactorQ2 => "factor-q2",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HullSet {
    T,
    S,
    Q,
    Scalar,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutFunction {
    Square,
    Ridge,
    Power,
    Softplus,
    Entropy,
    Bigm,
    Logeps,
}

#[derive(Subcommand)]
enum Command {
    /// Build a relaxation from an instance file and solve it.
    Solve {
        /// Path to the instance JSON.
        instance: PathBuf,
        #[arg(long, value_enum)]
        model: ModelName,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iter: usize,
        /// Write the solution JSON here (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment sweep and write result rows.
    Experiment {
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Seed range `a..b` (inclusive) or comma list, overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Query a hull membership oracle with a point file.
    HullCheck {
        #[arg(long, value_enum)]
        set: HullSet,
        #[arg(long)]
        point: PathBuf,
    },
    /// Generate a perspective cut at a base point.
    CutDemo {
        #[arg(long, value_enum)]
        function: CutFunction,
        /// Path to the base-point JSON (`{"xbar": ...}`).
        #[arg(long)]
        at: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        m_bound: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
}

fn parse_seed_spec(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = |s: &str| CliError::Validation(format!("bad seed spec '{s}'"));
    if let Some((a, b)) = spec.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad(spec))?;
        let hi: u64 = b.trim().parse().map_err(|_| bad(spec))?;
        if lo > hi {
            return Err(bad(spec));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(spec)))
        .collect()
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn run_solve(
    instance: PathBuf,
    model: ModelName,
    tol: f64,
    max_iter: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let payload = read_file(&instance)?;
    let built = build_named_model(model.as_str(), &payload)?;
    let settings = SolveSettings {
        tol,
        max_iter,
        ..Default::default()
    };
    let sol = solve(&built.problem, &settings)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let doc = solution_json(model.as_str(), &built, &sol);
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    match out {
        Some(path) => fs::write(&path, text)?,
        None => println!("{text}"),
    }
    if sol.status != SolveStatus::Optimal {
        return Err(CliError::Solver(format!(
            "terminated with status {:?} after {} iterations",
            sol.status, sol.iterations
        )));
    }
    Ok(())
}

fn run_experiment_cmd(
    kind: String,
    config: Option<PathBuf>,
    out: PathBuf,
    format: OutputFormat,
    seeds: Option<String>,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    let kind = ExperimentKind::from_str(&kind)?;
    let mut cfg: ExperimentConfig = match config {
        Some(path) => serde_json::from_str(&read_file(&path)?)
            .map_err(|e| CliError::Validation(format!("bad config: {e}")))?,
        None => ExperimentConfig::default(),
    };
    if let Some(spec) = seeds {
        cfg.seeds = parse_seed_spec(&spec)?;
    }
    let rows = match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            pool.install(|| run_experiment(kind, &cfg))?
        }
        None => run_experiment(kind, &cfg)?,
    };
    let mut buf: Vec<u8> = Vec::new();
    match format {
        OutputFormat::Csv => write_csv(&mut buf, kind, &rows)?,
        OutputFormat::Json => write_json(&mut buf, &rows)?,
    }
    fs::write(&out, buf)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn run_hull_check(set: HullSet, point: PathBuf) -> Result<(), CliError> {
    let payload = read_file(&point)?;
    let parse = |e: serde_json::Error| CliError::Validation(format!("bad point file: {e}"));
    let lib = |e: lowrank_core::Error| CliError::Validation(e.to_string());
    let result = match set {
        HullSet::T => {
            let p: TPoint = serde_json::from_str(&payload).map_err(parse)?;
            hull_membership_t(
                &to_sym(&p.x)?,
                &to_sym(&p.y)?,
                p.t,
                &p.omega,
                p.mu,
                p.k,
                p.tol,
            )
            .map_err(lib)?
        }
        HullSet::S => {
            let p: SPoint = serde_json::from_str(&payload).map_err(parse)?;
            hull_membership_s(
                &to_sym(&p.y)?,
                &to_sym(&p.x)?,
                &to_sym(&p.theta)?,
                p.l,
                p.u,
                p.k,
                p.tol,
            )
            .map_err(lib)?
        }
        HullSet::Q => {
            let p: QPoint = serde_json::from_str(&payload).map_err(parse)?;
            let mut blocks = Vec::with_capacity(p.blocks.len());
            for b in &p.blocks {
                blocks.push(QBlock {
                    x: to_sym(&b.x)?,
                    y: to_sym(&b.y)?,
                    theta: to_sym(&b.theta)?,
                    l: b.l,
                    u: b.u,
                    k: b.k,
                });
            }
            hull_membership_q(p.rho, &blocks, &p.weights, p.tol).map_err(lib)?
        }
        HullSet::Scalar => {
            let p: ScalarPoint = serde_json::from_str(&payload).map_err(parse)?;
            scalar_closure_membership(p.x, p.y, p.z, p.t, p.d, p.q, p.m_bound, p.tol)
                .map_err(lib)?
        }
    };
    let doc = json!({
        "schema_version": 1,
        "member": result.member,
        "margin": result.margin,
        "witness": result.witness,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(())
}

fn run_cut_demo(
    function: CutFunction,
    at: PathBuf,
    gamma: f64,
    p: f64,
    m_bound: f64,
    eps: f64,
) -> Result<(), CliError> {
    let query: CutQuery = serde_json::from_str(&read_file(&at)?)
        .map_err(|e| CliError::Validation(format!("bad base point: {e}")))?;
    let spec = match function {
        CutFunction::Square => ScalarFunctionSpec::Square,
        CutFunction::Ridge => ScalarFunctionSpec::Ridge { gamma },
        CutFunction::Power => ScalarFunctionSpec::Power { p },
        CutFunction::Softplus => ScalarFunctionSpec::Softplus,
        CutFunction::Entropy => ScalarFunctionSpec::Entropy,
        CutFunction::Bigm => ScalarFunctionSpec::BigM { m: m_bound },
        CutFunction::Logeps => ScalarFunctionSpec::Log { eps },
    };
    let lib = |e: lowrank_core::Error| CliError::Validation(e.to_string());
    let doc = match query.xbar {
        CutBase::Scalar(xbar) => {
            let cut = perspective_cut(&spec, xbar, query.c).map_err(lib)?;
            json!({
                "schema_version": 1,
                "kind": "scalar",
                "inequality": "rho >= z_coef * z + x_coef * x",
                "z_coef": cut.z_coef,
                "x_coef": cut.x_coef,
            })
        }
        CutBase::Matrix(rows) => {
            let xbar = to_sym(&rows)?;
            let cut = matrix_perspective_cut(&spec, &xbar).map_err(lib)?;
            let n = xbar.n();
            let mrows = |m: &lowrank_core::specfun::SymMatrix| -> Vec<Vec<f64>> {
                (0..n)
                    .map(|i| (0..n).map(|j| m.entry(i, j)).collect())
                    .collect()
            };
            // canonical contractions for reference
            let e1 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
            json!({
                "schema_version": 1,
                "kind": "matrix",
                "inequality": "theta >= constant + sym(coeff_x X) + sym(coeff_y Y)",
                "constant": mrows(&cut.constant),
                "coeff_x": mrows(&cut.coeff_x),
                "coeff_y": mrows(&cut.coeff_y),
                "trace_contraction": "tr(theta) >= <coeff_x, X> + <coeff_y, Y>",
                "rank_one_direction": e1.as_slice(),
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve {
            instance,
            model,
            tol,
            max_iter,
            out,
        } => run_solve(instance, model, tol, max_iter, out),
        Command::Experiment {
            kind,
            config,
            out,
            format,
            seeds,
            jobs,
        } => run_experiment_cmd(kind, config, out, format, seeds, jobs),
        Command::HullCheck { set, point } => run_hull_check(set, point),
        Command::CutDemo {
            function,
            at,
            gamma,
            p,
            m_bound,
            eps,
        } => run_cut_demo(function, at, gamma, p, m_bound, eps),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
