//! Random bounded-feasible LP generator shared by the LP test suites.

#![allow(dead_code)]

use dso_milp::lp::{LpProblem, ObjSense, RowSense};
use rand::Rng;

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Builds a feasible LP with every column boxed: a random interior point is
/// drawn first and each row's right-hand side is placed so that point
/// satisfies it.
pub fn random_lp<R: Rng>(rng: &mut R, max_cols: usize, max_rows: usize) -> LpProblem {
    let n = rng.gen_range(1..=max_cols);
    let m = rng.gen_range(1..=max_rows);
    let sense = if rng.gen_bool(0.5) { ObjSense::Maximize } else { ObjSense::Minimize };
    let mut p = LpProblem::new(sense);
    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen_range(1..=10) as f64;
        let l = if rng.gen_bool(0.25) { -rng.gen_range(0..=5) as f64 } else { 0.0 };
        let c = round2(rng.gen_range(-5.0..5.0));
        p.add_column(c, l, u);
        x0.push(rng.gen_range(l..=u));
    }
    for _ in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                let a = round2(rng.gen_range(-5.0..5.0));
                if a != 0.0 {
                    coefs.push((j, a));
                }
            }
        }
        if coefs.is_empty() {
            coefs.push((rng.gen_range(0..n), 1.0));
        }
        let act: f64 = coefs.iter().map(|&(j, a)| a * x0[j]).sum();
        let slack = rng.gen_range(0.0..3.0);
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (RowSense::Eq, act),
            1 | 2 => (RowSense::Le, act + slack),
            _ => (RowSense::Ge, act - slack),
        };
        p.add_row(coefs, sense, rhs);
    }
    p.offset = round2(rng.gen_range(-3.0..3.0));
    p
}
