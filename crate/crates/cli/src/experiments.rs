//! Experiment drivers: one function per family, each producing result
//! rows with the fixed schema from [`crate::config`]. Work is distributed
//! over seeds with a worker pool; rows are sorted by their declared keys
//! before being returned, so output files are reproducible for a fixed
//! configuration regardless of thread count.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lowrank_core::algos::{
    als_nmf, dopt_boolean_relaxation, dopt_mprt_relaxation, duality_gap, greedy_round_topk,
    submodular_greedy_dopt, truncated_svd, DoptInstance,
};
use lowrank_core::conic::{solve, SolveSettings, SolveStatus};
use lowrank_core::cuts::{
    matrix_perspective_cut, perspective_cut, rank_one_cut, soc_pair_cut, trace_cut,
};
use lowrank_core::hulls::{
    hull_membership_q, hull_membership_s, hull_membership_t, scalar_closure_level,
    scalar_closure_membership, QBlock,
};
use lowrank_core::models::{
    build_nmf_dnn, build_rank_k_svd, build_rrr_dcl, build_rrr_nn, build_rrr_persp, BuiltModel,
};
use lowrank_core::specfun::{logdet_eps, symmetrize, ScalarFunctionSpec, SymMatrix};

use crate::config::{ExperimentConfig, ExperimentKind, ResultRow};
use crate::gen::{gen_dopt, gen_nmf, gen_rrr_full};
use crate::CliError;

/// Salt separating the heuristic's random stream from the instance stream.
const ALS_SEED_SALT: u64 = 0x5eed_a15e;

/// Singular values above this threshold count toward the reported rank.
pub const RANK_THRESHOLD: f64 = 1e-4;

pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
) -> Result<Vec<ResultRow>, CliError> {
    cfg.validate(kind)?;
    let mut rows = match kind {
        ExperimentKind::Rrr => rrr_driver(cfg)?,
        ExperimentKind::Nmf => nmf_driver(cfg)?,
        ExperimentKind::Dopt => dopt_driver(cfg)?,
        ExperimentKind::Svd => svd_driver(cfg)?,
        ExperimentKind::Hull => hull_driver(cfg)?,
        ExperimentKind::Cuts => cuts_driver(cfg)?,
    };
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

fn settings(cfg: &ExperimentConfig) -> SolveSettings {
    SolveSettings {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..Default::default()
    }
}

fn status_str(s: SolveStatus) -> String {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
    }
    .to_string()
}

pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|s| **s > tol)
        .count()
}

// ---------------------------------------------------------------------------
// regression
// ---------------------------------------------------------------------------

/// Desk-scale defaults: `n = p = 20`, `m = 40`, `k_true = 4`,
/// `sigma = 0.05`, `gamma = 1e6`, 200 out-of-sample rows, all three
/// estimators across the full rank-penalty grid.
fn rrr_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let n = cfg.n.unwrap_or(20);
    let p = cfg.p.unwrap_or(n);
    let m = cfg.m.unwrap_or(40);
    let k_true = cfg.k_true.unwrap_or(4);
    let sigma = cfg.sigma.unwrap_or(0.05);
    let gamma = cfg.gamma.unwrap_or(1e6);
    let m_test = cfg.m_test.unwrap_or(200);
    let mu_grid = cfg.mu_grid_or_default();
    let methods: Vec<String> = cfg
        .methods
        .clone()
        .unwrap_or_else(|| vec!["persp".into(), "dcl".into(), "nn".into()]);
    for m in &methods {
        if !["persp", "dcl", "nn"].contains(&m.as_str()) {
            return Err(CliError::Validation(format!("unknown method '{m}'")));
        }
    }
    let solver = settings(cfg);

    let per_seed = |&seed: &u64| -> Vec<ResultRow> {
        let data = gen_rrr_full(n, p, m, k_true, sigma, seed, m_test);
        let oos_base = (&data.test.x_data * &data.beta_true - &data.test.y_data).norm_squared();
        let mut rows = Vec::new();
        for &mu in &mu_grid {
            let mut inst = data.train.clone();
            inst.gamma = gamma;
            inst.mu = mu;
            for method in &methods {
                let started = Instant::now();
                let model = match method.as_str() {
                    "persp" => build_rrr_persp(&inst),
                    "dcl" => build_rrr_dcl(&inst),
                    _ => build_rrr_nn(&inst),
                }
                .expect("valid instance");
                let sol = solve(&model.problem, &solver).expect("validated problem");
                let beta = model
                    .extract_one(&sol.x, "beta")
                    .expect("beta in varmap")
                    .as_matrix()
                    .expect("matrix block")
                    .clone();
                let mut row = ResultRow::new(ExperimentKind::Rrr, seed);
                row.method = Some(method.clone());
                row.mu = Some(mu);
                row.objective = Some(sol.objective);
                row.rank = Some(matrix_rank(&beta, RANK_THRESHOLD));
                row.accuracy =
                    Some((&beta - &data.beta_true).norm() / data.beta_true.norm());
                row.val_mse = Some(
                    (&data.val.x_data * &beta - &data.val.y_data).norm_squared() / m as f64,
                );
                row.oos_mse_ratio = Some(
                    (&data.test.x_data * &beta - &data.test.y_data).norm_squared() / oos_base,
                );
                row.status = Some(status_str(sol.status));
                row.iterations = Some(sol.iterations);
                row.wall_s = started.elapsed().as_secs_f64();
                rows.push(row);
            }
        }
        rows
    };
    Ok(cfg.seeds.par_iter().flat_map_iter(|s| per_seed(s)).collect())
}

// ---------------------------------------------------------------------------
// nonnegative factorization
// ---------------------------------------------------------------------------

/// Certified lower bound from a solved relaxation: the dual objective at
/// the returned dual point, never above the primal value.
fn relaxation_lower_bound(sol: &lowrank_core::conic::Solution) -> f64 {
    sol.objective.min(sol.dual_objective)
}

/// Desk-scale defaults: `n = 20`, `k_true = 5`, sweep only `k = k_true`.
fn nmf_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let n = cfg.n.unwrap_or(20);
    let k_true = cfg.k_true.unwrap_or(5);
    let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![k_true]);
    let solver = settings(cfg);

    let per_seed = |&seed: &u64| -> Vec<ResultRow> {
        let base = gen_nmf(n, k_true, seed, false);
        let mut rows = Vec::new();
        for &k in &k_list {
            let started = Instant::now();
            let mut inst = base.clone();
            inst.k = k;
            let (_, ub) =
                als_nmf(&inst, seed ^ ALS_SEED_SALT, 1e-4, 100).expect("valid instance");
            let model = build_nmf_dnn(&inst).expect("valid instance");
            let sol = solve(&model.problem, &solver).expect("validated problem");
            let lb = relaxation_lower_bound(&sol);
            let mut row = ResultRow::new(ExperimentKind::Nmf, seed);
            row.method = Some("als_dnn".into());
            row.k = Some(k);
            row.objective = Some(ub);
            row.bound = Some(lb);
            row.gap = Some(duality_gap(ub, lb).gap);
            row.status = Some(status_str(sol.status));
            row.iterations = Some(sol.iterations);
            row.wall_s = started.elapsed().as_secs_f64();
            rows.push(row);
        }
        rows
    };
    Ok(cfg.seeds.par_iter().flat_map_iter(|s| per_seed(s)).collect())
}

// ---------------------------------------------------------------------------
// experiment selection
// ---------------------------------------------------------------------------

fn binary_value(inst: &DoptInstance, z: &[f64]) -> f64 {
    logdet_eps(&inst.info_matrix(z), inst.eps).expect("psd information matrix")
}

/// Desk-scale defaults: `n = 10`, `m = 20`, budgets `1..=9`.
fn dopt_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let n = cfg.n.unwrap_or(10);
    let m = cfg.m.unwrap_or(20);
    let eps = cfg.eps.unwrap_or(1e-6);
    let k_list = cfg
        .k_list
        .clone()
        .unwrap_or_else(|| (1..=9.min(n - 1).min(m)).collect());
    let fw_iters = 500;

    let per_seed = |&seed: &u64| -> Vec<ResultRow> {
        let base = gen_dopt(n, m, seed);
        let mut rows = Vec::new();
        for &k in &k_list {
            let mut inst = base.clone();
            inst.k = k;
            inst.eps = eps;

            let started = Instant::now();
            let (_, greedy_value) = submodular_greedy_dopt(&inst).expect("valid instance");
            let greedy_wall = started.elapsed().as_secs_f64();

            let started = Instant::now();
            let boolean = dopt_boolean_relaxation(&inst, fw_iters).expect("valid instance");
            let bool_round = greedy_round_topk(&boolean.iterate, k);
            let bool_round_value = binary_value(&inst, &bool_round);
            let boolean_wall = started.elapsed().as_secs_f64();

            let mut row = ResultRow::new(ExperimentKind::Dopt, seed);
            row.method = Some("greedy".into());
            row.k = Some(k);
            row.objective = Some(greedy_value);
            row.bound = Some(boolean.certified_bound);
            row.gap = Some(duality_gap(boolean.certified_bound, greedy_value).gap);
            row.wall_s = greedy_wall;
            rows.push(row);

            let mut row = ResultRow::new(ExperimentKind::Dopt, seed);
            row.method = Some("boolean".into());
            row.k = Some(k);
            row.objective = Some(bool_round_value);
            row.bound = Some(boolean.certified_bound);
            row.gap = Some(duality_gap(boolean.certified_bound, bool_round_value).gap);
            row.wall_s = boolean_wall;
            rows.push(row);

            if k < n {
                let started = Instant::now();
                let mprt = dopt_mprt_relaxation(&inst, fw_iters).expect("k < n");
                let mprt_round = greedy_round_topk(&mprt.iterate, k);
                let mprt_round_value = binary_value(&inst, &mprt_round);
                let mut row = ResultRow::new(ExperimentKind::Dopt, seed);
                row.method = Some("mprt".into());
                row.k = Some(k);
                row.objective = Some(mprt_round_value);
                row.bound = Some(mprt.certified_bound);
                row.gap = Some(duality_gap(mprt.certified_bound, mprt_round_value).gap);
                row.wall_s = started.elapsed().as_secs_f64();
                rows.push(row);
            }

            if cfg.brute_force {
                let started = Instant::now();
                let opt = crate::oracle::dopt_brute_force(&inst);
                let mut row = ResultRow::new(ExperimentKind::Dopt, seed);
                row.method = Some("brute".into());
                row.k = Some(k);
                row.objective = Some(opt);
                row.wall_s = started.elapsed().as_secs_f64();
                rows.push(row);
            }
        }
        rows
    };
    Ok(cfg.seeds.par_iter().flat_map_iter(|s| per_seed(s)).collect())
}

// ---------------------------------------------------------------------------
// rank-k approximation
// ---------------------------------------------------------------------------

/// Defaults: dimensions up to `n = 15`, target ranks `1..=5`.
fn svd_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let n_max = cfg.n.unwrap_or(15).max(4);
    let solver = settings(cfg);

    let per_seed = |&seed: &u64| -> Vec<ResultRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = 4 + (rng.random::<u32>() as usize) % (n_max - 3);
        let c = 4 + (rng.random::<u32>() as usize) % (n_max - 3);
        let k = 1 + (rng.random::<u32>() as usize) % 5.min(r.min(c));
        let a = DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0);

        let started = Instant::now();
        let model = build_rank_k_svd(&a, k).expect("valid dims");
        let sol = solve(&model.problem, &solver).expect("validated problem");
        let oracle = 0.5 * (&a - truncated_svd(&a, k).expect("k within range")).norm_squared();
        let mut row = ResultRow::new(ExperimentKind::Svd, seed);
        row.method = Some("conic".into());
        row.k = Some(k);
        row.objective = Some(sol.objective);
        row.bound = Some(oracle);
        row.gap = Some(duality_gap(sol.objective, oracle).gap);
        row.status = Some(status_str(sol.status));
        row.iterations = Some(sol.iterations);
        row.wall_s = started.elapsed().as_secs_f64();
        vec![row]
    };
    Ok(cfg.seeds.par_iter().flat_map_iter(|s| per_seed(s)).collect())
}

// ---------------------------------------------------------------------------
// hull property suites
// ---------------------------------------------------------------------------

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.qr().q()
}

fn spectral(u: &DMatrix<f64>, d: &[f64]) -> SymMatrix {
    symmetrize(&(u * DMatrix::from_diagonal(&DVector::from_column_slice(d)) * u.transpose()))
}

struct SuiteOutcome {
    samples: usize,
    failures: usize,
    max_violation: f64,
}

fn suite_row(kind: ExperimentKind, seed: u64, name: &str, out: SuiteOutcome, wall: f64) -> ResultRow {
    let mut row = ResultRow::new(kind, seed);
    row.suite = Some(name.to_string());
    row.samples = Some(out.samples);
    row.failures = Some(out.failures);
    row.max_violation = Some(out.max_violation);
    row.wall_s = wall;
    row
}

/// One lifted member of the spectral-sublevel hull: a low-rank PSD matrix,
/// its range projector, and the exact level.
fn lifted_t_point(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
    omega: &ScalarFunctionSpec,
    mu: f64,
) -> (SymMatrix, SymMatrix, f64) {
    let u = random_orthogonal(n, rng);
    let rank = 1 + (rng.random::<u32>() as usize) % k;
    let mut lam = vec![0.0; n];
    let mut proj = vec![0.0; n];
    for l in lam.iter_mut().take(rank) {
        *l = rng.random::<f64>() * 1.5 + 0.05;
    }
    for p in proj.iter_mut().take(rank) {
        *p = 1.0;
    }
    let value: f64 = lam
        .iter()
        .take(rank)
        .map(|&l| omega.eval(l).expect("domain"))
        .sum::<f64>()
        + mu * rank as f64
        + (n - rank) as f64 * omega.omega0();
    (spectral(&u, &lam), spectral(&u, &proj), value)
}

/// One feasible point of the bounded quadratic-epigraph set: a rank-`r`
/// projector, a commuting PSD matrix inside the spectral box, and
/// `theta = X^2` plus PSD slack.
fn lifted_s_point(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
    l: f64,
    u_bound: f64,
) -> (SymMatrix, SymMatrix, SymMatrix) {
    let basis = random_orthogonal(n, rng);
    let rank = 1 + (rng.random::<u32>() as usize) % k;
    let mut proj = vec![0.0; n];
    let mut lam = vec![0.0; n];
    for i in 0..rank {
        proj[i] = 1.0;
        lam[i] = l.max(0.0) + rng.random::<f64>() * (u_bound - l.max(0.0));
    }
    let y = spectral(&basis, &proj);
    let x = spectral(&basis, &lam);
    let sq: Vec<f64> = lam.iter().map(|&v| v * v).collect();
    let slack = rng.random::<f64>() * 0.5;
    let theta_vals: Vec<f64> = sq
        .iter()
        .zip(proj.iter())
        .map(|(&s, &p)| s + slack * p)
        .collect();
    let theta = spectral(&basis, &theta_vals);
    (y, x, theta)
}

fn hull_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let samples = cfg.samples.unwrap_or(1000);
    let boundary = 200;
    let grid = cfg.grid.unwrap_or(20);
    let seed = cfg.seeds[0];
    let tol = 1e-7;
    let omega = ScalarFunctionSpec::Square;
    let (n, k, mu) = (4usize, 2usize, 0.3f64);
    let mut rows = Vec::new();

    // lifted members of the spectral hull
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..samples {
        let (x, y, value) = lifted_t_point(&mut rng, n, k, &omega, mu);
        let r = hull_membership_t(&x, &y, value + 1e-9, &omega, mu, k, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(-r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "t_lift", out, started.elapsed().as_secs_f64()));

    // convex combinations in a shared eigenbasis stay inside
    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..samples {
        let basis = random_orthogonal(n, &mut rng);
        let mk = |rng: &mut ChaCha8Rng, active: &[usize]| {
            let mut lam = vec![0.0; n];
            let mut proj = vec![0.0; n];
            for &i in active {
                lam[i] = rng.random::<f64>() + 0.05;
                proj[i] = 1.0;
            }
            let value: f64 = lam
                .iter()
                .filter(|&&l| l > 0.0)
                .map(|&l| omega.eval(l).unwrap())
                .sum::<f64>()
                + mu * active.len() as f64;
            (spectral(&basis, &lam), spectral(&basis, &proj), value)
        };
        let (xa, ya, ta) = mk(&mut rng, &[0, 1]);
        let (xb, yb, tb) = mk(&mut rng, &[0, 2]);
        let w: f64 = rng.random();
        let x = xa.scale(1.0 - w).add(&xb.scale(w));
        let y = ya.scale(1.0 - w).add(&yb.scale(w));
        let t = (1.0 - w) * ta + w * tb;
        let r = hull_membership_t(&x, &y, t + 1e-7, &omega, mu, k, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(-r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "t_combo", out, started.elapsed().as_secs_f64()));

    // reducing the level by 0.1 must exit the hull
    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples: boundary,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..boundary {
        let (x, y, value) = lifted_t_point(&mut rng, n, k, &omega, mu);
        let r = hull_membership_t(&x, &y, value - 0.1, &omega, mu, k, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "t_boundary", out, started.elapsed().as_secs_f64()));

    // quadratic-epigraph hull: lifted points, combinations, boundary
    let (l_b, u_b) = (0.0, 1.5);
    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..samples {
        let (y, x, theta) = lifted_s_point(&mut rng, n, k, l_b, u_b);
        let r = hull_membership_s(&y, &x, &theta, l_b, u_b, k, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(-r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "s_lift", out, started.elapsed().as_secs_f64()));

    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..samples {
        let (ya, xa, tha) = lifted_s_point(&mut rng, n, k, l_b, u_b);
        let (yb, xb, thb) = lifted_s_point(&mut rng, n, k, l_b, u_b);
        let w: f64 = rng.random();
        let r = hull_membership_s(
            &ya.scale(1.0 - w).add(&yb.scale(w)),
            &xa.scale(1.0 - w).add(&xb.scale(w)),
            &tha.scale(1.0 - w).add(&thb.scale(w)),
            l_b,
            u_b,
            k,
            tol,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        if !r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(-r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "s_combo", out, started.elapsed().as_secs_f64()));

    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples: boundary,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..boundary {
        // theta strictly below X^2 on the active block must fail
        let basis = random_orthogonal(n, &mut rng);
        let mut proj = vec![0.0; n];
        proj[0] = 1.0;
        proj[1] = 1.0;
        let p = spectral(&basis, &proj);
        let theta = p.scale(0.9); // X = Y = P, theta = 0.9 P < X^2
        let r = hull_membership_s(&p, &p, &theta, 0.0, 1.0, k, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if r.member {
            out.failures += 1;
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "s_boundary", out, started.elapsed().as_secs_f64()));

    // weighted composition
    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for trial in 0..samples {
        let (ya, xa, tha) = lifted_s_point(&mut rng, n, k, l_b, u_b);
        let (yb, xb, thb) = lifted_s_point(&mut rng, n, k, l_b, u_b);
        let blocks = vec![
            QBlock {
                x: xa,
                y: ya,
                theta: tha,
                l: l_b,
                u: u_b,
                k,
            },
            QBlock {
                x: xb,
                y: yb,
                theta: thb,
                l: l_b,
                u: u_b,
                k,
            },
        ];
        let weights = [rng.random::<f64>(), rng.random::<f64>()];
        let exact: f64 = blocks
            .iter()
            .zip(weights.iter())
            .map(|(b, &q)| q * b.theta.trace())
            .sum();
        let (rho, expect_member) = if trial % 2 == 0 {
            (exact + 1e-9, true)
        } else {
            (exact - 1e-2, false)
        };
        let r = hull_membership_q(rho, &blocks, &weights, tol)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if r.member != expect_member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(r.margin.abs());
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "q_combo", out, started.elapsed().as_secs_f64()));

    // scalar closure: midpoints of the two generating slices
    let (d, q_pow, m_bound) = (0.3, 2.0, 1.0);
    let started = Instant::now();
    let mut out = SuiteOutcome {
        samples,
        failures: 0,
        max_violation: 0.0,
    };
    for _ in 0..samples {
        let y1 = rng.random::<f64>() * 4.0 - 2.0;
        let x2 = rng.random::<f64>() * 2.0 * m_bound - m_bound;
        let y2 = rng.random::<f64>() * 4.0 - 2.0;
        let w: f64 = rng.random();
        let t1 = (y1 - d).abs().powf(q_pow);
        let t2 = (x2 + y2 - d).abs().powf(q_pow);
        let r = scalar_closure_membership(
            w * x2,
            (1.0 - w) * y1 + w * y2,
            w,
            (1.0 - w) * t1 + w * t2 + 1e-9,
            d,
            q_pow,
            m_bound,
            tol,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        if !r.member {
            out.failures += 1;
            out.max_violation = out.max_violation.max(-r.margin);
        }
    }
    rows.push(suite_row(ExperimentKind::Hull, seed, "scalar_combo", out, started.elapsed().as_secs_f64()));

    // closure agreement against the sampled convexification oracle
    let started = Instant::now();
    let out = closure_grid_agreement(d, q_pow, m_bound, grid);
    rows.push(suite_row(ExperimentKind::Hull, seed, "scalar_grid", out, started.elapsed().as_secs_f64()));

    Ok(rows)
}

/// Sampling resolution of the brute-force convexification oracle: its
/// level function overshoots the true closure by at most this much on the
/// query box (piecewise-linear interpolation error of the sampled
/// slices).
const CLOSURE_ORACLE_RESOLUTION: f64 = 0.025;

/// Compares the closure level function against a convex-combination
/// search (linear programming over sampled slice points) on a cubic grid.
/// Membership queries placed `1e-3` outside the uncertainty band must
/// agree exactly; the sandwich
/// `level - 1e-3 <= oracle <= level + resolution` is also enforced.
fn closure_grid_agreement(d: f64, q: f64, m_bound: f64, grid: usize) -> SuiteOutcome {
    let y_span = 8.0;
    let samples = crate::oracle::closure_samples(d, q, m_bound, y_span, 400, 16, 100);
    let queries: Vec<(f64, f64, f64)> = {
        let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (grid - 1) as f64;
        let mut v = Vec::with_capacity(grid * grid * grid);
        for ix in 0..grid {
            for iy in 0..grid {
                for iz in 0..grid {
                    v.push((
                        lin(-1.2 * m_bound, 1.2 * m_bound, ix),
                        lin(-2.0, 2.0, iy),
                        lin(0.0, 1.0, iz),
                    ));
                }
            }
        }
        v
    };
    let mut out = SuiteOutcome {
        samples: queries.len(),
        failures: 0,
        max_violation: 0.0,
    };
    let results: Vec<(usize, f64)> = queries
        .par_iter()
        .map(|&(x, y, z)| {
            let mine = scalar_closure_level(x, y, z, d, q, m_bound);
            let oracle = crate::oracle::closure_hull_min_t(&samples, x, y, z);
            let mut failures = 0usize;
            let mut violation = 0.0f64;
            match (mine, oracle) {
                (None, None) => {}
                (Some(_), None) | (None, Some(_)) => failures += 1,
                (Some(tm), Some(to)) => {
                    // the sampled hull can only overestimate the closure
                    if tm - to > 1e-3 {
                        failures += 1;
                        violation = violation.max(tm - to);
                    }
                    if to - tm > CLOSURE_ORACLE_RESOLUTION {
                        failures += 1;
                        violation = violation.max(to - tm - CLOSURE_ORACLE_RESOLUTION);
                    }
                    // two-sided membership agreement outside the band
                    let level_hi = to + 1e-3;
                    let level_lo = tm - 1e-3;
                    let mine_hi = scalar_closure_membership(x, y, z, level_hi, d, q, m_bound, 1e-7)
                        .expect("validated");
                    if !mine_hi.member {
                        failures += 1;
                    }
                    if level_lo >= 0.0 {
                        let mine_lo =
                            scalar_closure_membership(x, y, z, level_lo, d, q, m_bound, 1e-7)
                                .expect("validated");
                        let oracle_lo = to <= level_lo;
                        if mine_lo.member != oracle_lo && (tm - level_lo).abs() > 1e-3 {
                            failures += 1;
                        }
                    }
                }
            }
            (failures, violation)
        })
        .collect();
    for (f, v) in results {
        out.failures += f;
        out.max_violation = out.max_violation.max(v);
    }
    out
}

// ---------------------------------------------------------------------------
// cut validity suites
// ---------------------------------------------------------------------------

fn cuts_driver(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let samples = cfg.samples.unwrap_or(500);
    let seed = cfg.seeds[0];
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // scalar families: cuts never exclude feasible switched points
    for (name, spec) in [
        ("scalar_square", ScalarFunctionSpec::Square),
        ("scalar_ridge", ScalarFunctionSpec::Ridge { gamma: 0.7 }),
        ("scalar_power3", ScalarFunctionSpec::Power { p: 3.0 }),
        ("scalar_softplus", ScalarFunctionSpec::Softplus),
    ] {
        let started = Instant::now();
        let mut out = SuiteOutcome {
            samples,
            failures: 0,
            max_violation: 0.0,
        };
        for _ in 0..samples {
            let xbar = rng.random::<f64>() * 3.0 - 1.5;
            let c = rng.random::<f64>();
            let cut = perspective_cut(&spec, xbar, c).expect("domain");
            // tangency at (xbar, z = 1)
            let tangent = cut.residual(xbar, 1.0, spec.eval(xbar).unwrap() + c);
            if tangent.abs() > 1e-9 {
                out.failures += 1;
                out.max_violation = out.max_violation.max(tangent.abs());
            }
            let x = rng.random::<f64>() * 3.0 - 1.5;
            if let Some(fx) = spec.eval(x) {
                let r = cut.residual(x, 1.0, fx + c);
                if r < -1e-8 {
                    out.failures += 1;
                    out.max_violation = out.max_violation.max(-r);
                }
            }
            let r0 = cut.residual(0.0, 0.0, 0.0);
            if r0 < -1e-8 {
                out.failures += 1;
                out.max_violation = out.max_violation.max(-r0);
            }
        }
        rows.push(suite_row(ExperimentKind::Cuts, seed, name, out, started.elapsed().as_secs_f64()));
    }

    // matrix family and its contractions on commuting feasible triples
    let names = ["matrix_square", "matrix_trace", "matrix_rank_one", "matrix_soc_pair"];
    let mut outs: Vec<SuiteOutcome> = (0..4)
        .map(|_| SuiteOutcome {
            samples,
            failures: 0,
            max_violation: 0.0,
        })
        .collect();
    let started = Instant::now();
    for trial in 0..samples {
        let n = 3 + trial % 2;
        let basis = random_orthogonal(n, &mut rng);
        let rank = 1 + trial % n;
        let mut lx = vec![0.0; n];
        let mut ly = vec![0.0; n];
        for i in 0..rank {
            lx[i] = rng.random::<f64>() * 2.0 - 1.0;
            ly[i] = 1.0;
        }
        let x = spectral(&basis, &lx);
        let y = spectral(&basis, &ly);
        let lt: Vec<f64> = lx
            .iter()
            .zip(ly.iter())
            .map(|(&a, &b)| if b > 0.0 { a * a / b } else { 0.0 })
            .collect();
        let theta = spectral(&basis, &lt);
        let lbar: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let xbar = spectral(&basis, &lbar);
        let cut = matrix_perspective_cut(&ScalarFunctionSpec::Square, &xbar).expect("domain");

        let resid = cut.residual(&x, &y, &theta).min_eig();
        if resid < -1e-8 {
            outs[0].failures += 1;
            outs[0].max_violation = outs[0].max_violation.max(-resid);
        }
        let tr = trace_cut(&cut).residual(&x, &y, &theta);
        if tr < -1e-8 {
            outs[1].failures += 1;
            outs[1].max_violation = outs[1].max_violation.max(-tr);
        }
        let b = DVector::from_fn(n, |i, _| rng.random::<f64>() + if i == 0 { 0.5 } else { 0.0 });
        let r1 = rank_one_cut(&cut, &b).expect("nonzero").residual(&x, &y, &theta);
        if r1 < -1e-8 {
            outs[2].failures += 1;
            outs[2].max_violation = outs[2].max_violation.max(-r1);
        }
        let v2 = DVector::from_fn(n, |i, _| rng.random::<f64>() + if i == 1 { 0.5 } else { 0.0 });
        let sp = soc_pair_cut(&cut, &b, &v2).expect("nonzero").min_eig(&x, &y, &theta);
        if sp < -1e-8 {
            outs[3].failures += 1;
            outs[3].max_violation = outs[3].max_violation.max(-sp);
        }
    }
    let wall = started.elapsed().as_secs_f64() / 4.0;
    for (name, out) in names.into_iter().zip(outs) {
        rows.push(suite_row(ExperimentKind::Cuts, seed, name, out, wall));
    }

    Ok(rows)
}

/// Convenience used by the solve subcommand and tests: picks the builder
/// for a model name.
pub fn build_named_model(
    name: &str,
    payload: &str,
) -> Result<BuiltModel, CliError> {
    let parse_err = |e: serde_json::Error| CliError::Validation(format!("bad instance: {e}"));
    let build_err = |e: lowrank_core::Error| CliError::Validation(e.to_string());
    match name {
        "rrr-persp" | "rrr-dcl" | "rrr-nn" => {
            let inst: lowrank_core::models::RrrInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            match name {
                "rrr-persp" => build_rrr_persp(&inst),
                "rrr-dcl" => build_rrr_dcl(&inst),
                _ => build_rrr_nn(&inst),
            }
            .map_err(build_err)
        }
        "completion" => {
            let inst: lowrank_core::models::CompletionInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            lowrank_core::models::build_matrix_completion(&inst).map_err(build_err)
        }
        "tensor" => {
            let inst: lowrank_core::models::TensorInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            lowrank_core::models::build_tensor_completion(&inst).map_err(build_err)
        }
        "nmf-dnn" => {
            let inst: lowrank_core::models::NmfInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            build_nmf_dnn(&inst).map_err(build_err)
        }
        "svd" => {
            let inst: lowrank_core::models::SvdInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            inst.validate().map_err(build_err)?;
            build_rank_k_svd(&inst.a, inst.k).map_err(build_err)
        }
        "factor-q2" => {
            let inst: lowrank_core::models::FactorInstance =
                serde_json::from_str(payload).map_err(parse_err)?;
            lowrank_core::models::build_factor_analysis_q2(&inst).map_err(build_err)
        }
        other => Err(CliError::Validation(format!("unknown model '{other}'"))),
    }
}
