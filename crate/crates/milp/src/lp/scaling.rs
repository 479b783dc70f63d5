//! Geometric row/column scaling with power-of-two factors.

const PASSES: usize = 6;

fn pow2_round(v: f64) -> f64 {
    if !v.is_finite() || v <= 0.0 {
        return 1.0;
    }
    2f64.powi(v.log2().round() as i32)
}

/// Returns `(row_scale, col_scale)` such that `row_scale[i] * a_ij * col_scale[j]`
/// has entries clustered around one.
pub(crate) fn geometric(
    m: usize,
    n: usize,
    col_start: &[usize],
    col_idx: &[usize],
    col_val: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![1.0; m];
    let mut c = vec![1.0; n];
    for _ in 0..PASSES {
        let mut rmin = vec![f64::INFINITY; m];
        let mut rmax = vec![0.0_f64; m];
        for j in 0..n {
            for k in col_start[j]..col_start[j + 1] {
                let a = (col_val[k] * c[j]).abs();
                if a > 0.0 {
                    let i = col_idx[k];
                    rmin[i] = rmin[i].min(a);
                    rmax[i] = rmax[i].max(a);
                }
            }
        }
        for i in 0..m {
            if rmax[i] > 0.0 {
                r[i] = 1.0 / (rmin[i] * rmax[i]).sqrt();
            }
        }
        for j in 0..n {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for k in col_start[j]..col_start[j + 1] {
                let a = (col_val[k] * r[col_idx[k]]).abs();
                if a > 0.0 {
                    lo = lo.min(a);
                    hi = hi.max(a);
                }
            }
            if hi > 0.0 {
                c[j] = 1.0 / (lo * hi).sqrt();
            }
        }
    }
    (
        r.into_iter().map(pow2_round).collect(),
        c.into_iter().map(pow2_round).collect(),
    )
}
