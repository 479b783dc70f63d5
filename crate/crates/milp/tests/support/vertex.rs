//! Brute-force LP oracle: enumerates every basic solution of a small,
//! fully boxed LP and returns the best feasible objective.
//!
//! A vertex of `{x : rows, l <= x <= u}` has `n` linearly independent active
//! constraints. We pick the set `F` of columns not pinned to a bound, pin the
//! rest to lower or upper, choose `|F|` active rows and solve the square
//! system for `x_F`. Equality rows left out of the chosen set are enforced by
//! the feasibility check, which also covers linearly dependent equalities.

#![allow(dead_code)]

use dso_milp::lp::{LpProblem, ObjSense, RowSense};

const FEAS_TOL: f64 = 1e-9;

/// Returns the optimal objective (including the offset), or `None` when the
/// LP is infeasible. Panics if a column has an infinite bound.
pub fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    let n = p.num_cols();
    assert!(n <= 16, "vertex oracle is for tiny LPs");
    for j in 0..n {
        assert!(p.lower[j].is_finite() && p.upper[j].is_finite(), "oracle needs boxed columns");
    }
    let dense: Vec<Vec<f64>> = p
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for &(j, a) in &r.coefs {
                v[j] += a;
            }
            v
        })
        .collect();
    let m = p.num_rows();

    let better = |a: f64, b: f64| match p.sense {
        ObjSense::Maximize => a > b,
        ObjSense::Minimize => a < b,
    };
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];

    for free_mask in 0u32..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|&j| free_mask >> j & 1 == 1).collect();
        let k = free.len();
        if k > m {
            continue;
        }
        let pinned: Vec<usize> = (0..n).filter(|&j| free_mask >> j & 1 == 0).collect();
        for active in combinations(m, k) {
            for side_mask in 0u32..(1u32 << pinned.len()) {
                for (b, &j) in pinned.iter().enumerate() {
                    x[j] = if side_mask >> b & 1 == 1 { p.upper[j] } else { p.lower[j] };
                }
                if k > 0 {
                    let mut mat = vec![vec![0.0; k + 1]; k];
                    for (r, &i) in active.iter().enumerate() {
                        let mut rhs = p.rows[i].rhs;
                        for &j in &pinned {
                            rhs -= dense[i][j] * x[j];
                        }
                        for (c, &j) in free.iter().enumerate() {
                            mat[r][c] = dense[i][j];
                        }
                        mat[r][k] = rhs;
                    }
                    let Some(sol) = gauss(mat) else { continue };
                    for (c, &j) in free.iter().enumerate() {
                        x[j] = sol[c];
                    }
                }
                if !feasible(p, &dense, &x) {
                    continue;
                }
                let obj = p.objective_value(&x);
                if best.is_none_or(|b| better(obj, b)) {
                    best = Some(obj);
                }
            }
        }
    }
    best
}

fn feasible(p: &LpProblem, dense: &[Vec<f64>], x: &[f64]) -> bool {
    for j in 0..x.len() {
        if x[j] < p.lower[j] - FEAS_TOL || x[j] > p.upper[j] + FEAS_TOL {
            return false;
        }
    }
    for (i, row) in p.rows.iter().enumerate() {
        let act: f64 = dense[i].iter().zip(x).map(|(a, v)| a * v).sum();
        let ok = match row.sense {
            RowSense::Le => act <= row.rhs + FEAS_TOL,
            RowSense::Ge => act >= row.rhs - FEAS_TOL,
            RowSense::Eq => (act - row.rhs).abs() <= FEAS_TOL,
        };
        if !ok {
            return false;
        }
    }
    true
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting on an augmented `k x (k+1)`
/// matrix. `None` when singular.
fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=k {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}
