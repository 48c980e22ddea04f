//! Independent verification oracles for the experiment harness and the
//! acceptance suite: a small dense simplex solver, brute-force enumeration
//! of budgeted selections, and a sampling-based convexification oracle for
//! the scalar closure. None of these share code with the library paths
//! they check.

use lowrank_core::algos::DoptInstance;
use lowrank_core::specfun::{logdet_eps, symmetrize};
use nalgebra::DMatrix;

/// Minimizes `c^T x` subject to `E x = b`, `x >= 0` by a two-phase dense
/// simplex with Bland's rule. Returns the optimal value, or `None` when the
/// program is infeasible. Suited to a handful of rows and a few thousand
/// columns.
pub fn simplex_lp(c: &[f64], e_rows: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let m = e_rows.len();
    let n = c.len();
    assert!(e_rows.iter().all(|r| r.len() == n));
    assert_eq!(b.len(), m);

    // flip rows so b >= 0, then add artificial variables
    let mut a = vec![vec![0.0f64; n + m]; m];
    let mut rhs = vec![0.0f64; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            a[i][j] = sign * e_rows[i][j];
        }
        a[i][n + i] = 1.0;
        rhs[i] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // phase 1: minimize the sum of artificials
    let phase1_cost: Vec<f64> = (0..n + m)
        .map(|j| if j >= n { 1.0 } else { 0.0 })
        .collect();
    let feas = simplex_core(&mut a, &mut rhs, &mut basis, &phase1_cost, n + m);
    if feas > 1e-7 {
        return None;
    }
    // drive leftover artificials out of the basis where possible
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| a[i][j].abs() > 1e-9) {
                pivot(&mut a, &mut rhs, &mut basis, i, j);
            }
        }
    }

    // phase 2 on the original columns only
    let mut cost = c.to_vec();
    cost.resize(n + m, 1e30); // artificials forbidden
    let obj = simplex_core(&mut a, &mut rhs, &mut basis, &cost, n);
    Some(obj)
}

fn pivot(a: &mut [Vec<f64>], rhs: &mut [f64], basis: &mut [usize], row: usize, col: usize) {
    let m = a.len();
    let piv = a[row][col];
    let width = a[row].len();
    for j in 0..width {
        a[row][j] /= piv;
    }
    rhs[row] /= piv;
    for i in 0..m {
        if i == row {
            continue;
        }
        let f = a[i][col];
        if f == 0.0 {
            continue;
        }
        for j in 0..width {
            a[i][j] -= f * a[row][j];
        }
        rhs[i] -= f * rhs[row];
    }
    basis[row] = col;
}

/// Runs the simplex on the current tableau. `ncols` restricts the entering
/// columns (phase 2 excludes artificials). Returns the objective value.
fn simplex_core(
    a: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    ncols: usize,
) -> f64 {
    let m = a.len();
    loop {
        // reduced costs via the basic multipliers
        let mut entering = None;
        for j in 0..ncols {
            if basis.contains(&j) {
                continue;
            }
            let mut red = cost[j];
            for i in 0..m {
                red -= cost[basis[i]] * a[i][j];
            }
            if red < -1e-9 {
                // Bland: first improving index
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else { break };
        // ratio test, Bland ties by smallest basis index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if a[i][col] > 1e-11 {
                let ratio = rhs[i] / a[i][col];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 || (ratio < lr + 1e-12 && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            // unbounded direction; callers only pose bounded programs
            return f64::NEG_INFINITY;
        };
        pivot(a, rhs, basis, row, col);
    }
    (0..m).map(|i| cost[basis[i]] * rhs[i]).sum()
}

/// Exact budgeted maximum of the pseudo log-determinant by enumeration of
/// all `k`-subsets of the experiment columns.
pub fn dopt_brute_force(inst: &DoptInstance) -> f64 {
    let m = inst.m();
    let n = inst.n();
    let mut best = f64::NEG_INFINITY;
    let mut subset = vec![0usize; inst.k];

    fn rec(
        inst: &DoptInstance,
        subset: &mut Vec<usize>,
        depth: usize,
        start: usize,
        n: usize,
        best: &mut f64,
    ) {
        if depth == subset.len() {
            let mut info = DMatrix::zeros(n, n);
            for &j in subset.iter() {
                let col = inst.a.column(j);
                info += col * col.transpose();
            }
            let v = logdet_eps(&symmetrize(&info), inst.eps).expect("psd by construction");
            if v > *best {
                *best = v;
            }
            return;
        }
        for j in start..inst.m() {
            subset[depth] = j;
            rec(inst, subset, depth + 1, j + 1, n, best);
        }
    }
    rec(inst, &mut subset, 0, 0, n, &mut best);
    let _ = m;
    best
}

/// One sampled point of the nonconvex power-residual set, as
/// `(x, y, z, t)`.
pub type ClosurePoint = [f64; 4];

/// Dense sample of the two slices of the set
/// `{t >= |x + y - d|^q, |x| <= M, z binary, x = 0 if z = 0}`:
/// the `z = 0` slice on a fine line in `y`, the `z = 1` slice on an
/// `x`-by-`y` grid with `y` fine enough that blends along constant
/// `x + y` interpolate the power tightly.
pub fn closure_samples(
    d: f64,
    q: f64,
    m_bound: f64,
    y_range: f64,
    n_line: usize,
    n_x: usize,
    n_y: usize,
) -> Vec<ClosurePoint> {
    let mut pts = Vec::with_capacity(n_line + n_x * n_y);
    for i in 0..n_line {
        let y = -y_range + 2.0 * y_range * (i as f64) / (n_line as f64 - 1.0);
        pts.push([0.0, y, 0.0, (y - d).abs().powf(q)]);
    }
    for ix in 0..n_x {
        let x = -m_bound + 2.0 * m_bound * (ix as f64) / (n_x as f64 - 1.0);
        for iy in 0..n_y {
            let y = -y_range + 2.0 * y_range * (iy as f64) / (n_y as f64 - 1.0);
            pts.push([x, y, 1.0, (x + y - d).abs().powf(q)]);
        }
    }
    pts
}

/// Smallest `t` for which `(x, y, z, t)` is expressible as a convex
/// combination of the sampled points: a linear program over the sample
/// weights. `None` when no combination matches `(x, y, z)`.
pub fn closure_hull_min_t(samples: &[ClosurePoint], x: f64, y: f64, z: f64) -> Option<f64> {
    let n = samples.len();
    let c: Vec<f64> = samples.iter().map(|p| p[3]).collect();
    let rows = vec![
        samples.iter().map(|_| 1.0).collect::<Vec<f64>>(),
        samples.iter().map(|p| p[0]).collect(),
        samples.iter().map(|p| p[1]).collect(),
        samples.iter().map(|p| p[2]).collect(),
    ];
    let b = vec![1.0, x, y, z];
    let _ = n;
    simplex_lp(&c, &rows, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_solves_tiny_programs() {
        // min -x1 - 2 x2 s.t. x1 + x2 + s = 1 with slack as a column
        let c = vec![-1.0, -2.0, 0.0];
        let rows = vec![vec![1.0, 1.0, 1.0]];
        let b = vec![1.0];
        let v = simplex_lp(&c, &rows, &b).unwrap();
        assert!((v + 2.0).abs() < 1e-9, "got {v}");

        // infeasible: x1 = -1 with x1 >= 0
        let v = simplex_lp(&[0.0], &[vec![1.0]], &[-1.0]);
        assert!(v.is_none());
    }

    #[test]
    fn simplex_matches_degenerate_blend() {
        // three collinear points; the hull minimum picks the cheapest blend
        let samples = [
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0, 3.0],
            [0.5, 0.0, 0.5, 2.5],
        ];
        let v = closure_hull_min_t(&samples, 0.5, 0.0, 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "blend of the endpoints wins: {v}");
    }

    #[test]
    fn brute_force_tiny_case() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]);
        let inst = DoptInstance {
            schema_version: 1,
            a,
            k: 2,
            eps: 1e-6,
        };
        let v = dopt_brute_force(&inst);
        // best pair is the two unit vectors: logdet_eps = 2 log(1 + eps)
        assert!((v - 2.0 * (1.0 + 1e-6f64).ln()).abs() < 1e-9);
    }
}
