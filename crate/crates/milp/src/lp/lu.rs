//! Sparse LU factorization of the simplex basis with product-form updates.
//!
//! The factorization works on rows of the basis matrix: Gaussian elimination
//! with Markowitz pivot selection and a row-wise threshold test produces a
//! sequence of elimination steps `(pivot row, pivot column, multipliers)` and
//! the corresponding rows of a permuted upper triangular factor. Basis changes
//! between refactorizations are appended as eta columns.

const NONE: usize = usize::MAX;

/// Relative pivot threshold for the Markowitz search.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Entries below this magnitude are never accepted as pivots.
const PIVOT_ABS_TOL: f64 = 1e-11;
/// Number of additional columns examined after the first acceptable candidate.
const SEARCH_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Singular {
    /// Basis positions that could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot; same length as `positions`.
    pub rows: Vec<usize>,
}

/// Doubly linked buckets of indices keyed by their nonzero count.
struct CountLists {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
    linked: Vec<bool>,
}

impl CountLists {
    fn new(n: usize) -> Self {
        Self {
            head: vec![NONE; n + 2],
            next: vec![NONE; n],
            prev: vec![NONE; n],
            count: vec![0; n],
            linked: vec![false; n],
        }
    }

    fn insert(&mut self, idx: usize, count: usize) {
        let count = count.min(self.head.len() - 1);
        self.count[idx] = count;
        self.prev[idx] = NONE;
        self.next[idx] = self.head[count];
        if self.head[count] != NONE {
            self.prev[self.head[count]] = idx;
        }
        self.head[count] = idx;
        self.linked[idx] = true;
    }

    fn remove(&mut self, idx: usize) {
        if !self.linked[idx] {
            return;
        }
        let (p, n) = (self.prev[idx], self.next[idx]);
        if p != NONE {
            self.next[p] = n;
        } else {
            self.head[self.count[idx]] = n;
        }
        if n != NONE {
            self.prev[n] = p;
        }
        self.linked[idx] = false;
    }

    fn update(&mut self, idx: usize, count: usize) {
        if self.linked[idx] {
            self.remove(idx);
            self.insert(idx, count);
        }
    }
}

#[derive(Debug, Clone)]
struct Eta {
    position: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// LU factors of a square basis plus the eta file accumulated since.
#[derive(Debug, Clone, Default)]
pub(crate) struct Factor {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_col: Vec<usize>,
    pivot_val: Vec<f64>,
    l_start: Vec<usize>,
    l_entries: Vec<(usize, f64)>,
    u_start: Vec<usize>,
    u_entries: Vec<(usize, f64)>,
    etas: Vec<Eta>,
}

impl Factor {
    /// Factorizes the `m x m` matrix whose column `k` is `columns[k]`
    /// (row index, value pairs).
    pub(crate) fn factorize(m: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                if v != 0.0 {
                    rows[i].push((k, v));
                    col_rows[k].push(i);
                }
            }
        }

        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut row_lists = CountLists::new(m);
        let mut col_lists = CountLists::new(m);
        for i in 0..m {
            row_lists.insert(i, rows[i].len());
        }
        for k in 0..m {
            col_lists.insert(k, col_rows[k].len());
        }

        let mut f = Factor {
            m,
            pivot_row: Vec::with_capacity(m),
            pivot_col: Vec::with_capacity(m),
            pivot_val: Vec::with_capacity(m),
            l_start: vec![0],
            l_entries: Vec::new(),
            u_start: vec![0],
            u_entries: Vec::new(),
            etas: Vec::new(),
        };
        let mut mark = vec![NONE; m];

        for _step in 0..m {
            let Some((r, c)) = select_pivot(&rows, &col_rows, &row_done, &row_lists, &col_lists)
            else {
                break;
            };
            let pivot_idx = rows[r].iter().position(|&(j, _)| j == c).expect("pivot present");
            let pivot = rows[r][pivot_idx].1;
            let pivot_row: Vec<(usize, f64)> = rows[r]
                .iter()
                .copied()
                .filter(|&(j, _)| j != c)
                .collect();

            row_done[r] = true;
            col_done[c] = true;
            row_lists.remove(r);
            col_lists.remove(c);

            // Eliminate column c from every other active row.
            let targets: Vec<usize> = col_rows[c]
                .iter()
                .copied()
                .filter(|&i| !row_done[i])
                .collect();
            for i in targets {
                let Some(ci) = rows[i].iter().position(|&(j, _)| j == c) else {
                    continue;
                };
                let a_ic = rows[i].swap_remove(ci).1;
                let mult = a_ic / pivot;
                f.l_entries.push((i, mult));
                if !pivot_row.is_empty() {
                    for (idx, &(j, _)) in rows[i].iter().enumerate() {
                        mark[j] = idx;
                    }
                    for &(j, v) in &pivot_row {
                        if mark[j] != NONE {
                            rows[i][mark[j]].1 -= mult * v;
                        } else {
                            rows[i].push((j, -mult * v));
                            col_rows[j].push(i);
                            col_lists.update(j, col_lists.count[j] + 1);
                        }
                    }
                    for &(j, _) in rows[i].iter() {
                        mark[j] = NONE;
                    }
                }
                row_lists.update(i, rows[i].len());
            }
            f.l_start.push(f.l_entries.len());

            for &(j, _) in &pivot_row {
                col_lists.update(j, col_lists.count[j].saturating_sub(1));
            }
            col_rows[c].clear();

            f.pivot_row.push(r);
            f.pivot_col.push(c);
            f.pivot_val.push(pivot);
            f.u_entries.extend_from_slice(&pivot_row);
            f.u_start.push(f.u_entries.len());
            rows[r].clear();
        }

        if f.pivot_row.len() < m {
            let positions = (0..m).filter(|&k| !col_done[k]).collect();
            let rows_left = (0..m).filter(|&i| !row_done[i]).collect();
            return Err(Singular { positions, rows: rows_left });
        }
        Ok(f)
    }

    pub(crate) fn num_etas(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = a` in place; `a` is indexed by row on entry and by basis
    /// position on exit.
    pub(crate) fn ftran(&self, a: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let v = a[self.pivot_row[k]];
            if v != 0.0 {
                for &(i, mult) in &self.l_entries[self.l_start[k]..self.l_start[k + 1]] {
                    a[i] -= mult * v;
                }
            }
        }
        let mut x = vec![0.0; m];
        for k in (0..m).rev() {
            let mut s = a[self.pivot_row[k]];
            for &(j, v) in &self.u_entries[self.u_start[k]..self.u_start[k + 1]] {
                s -= v * x[j];
            }
            x[self.pivot_col[k]] = s / self.pivot_val[k];
        }
        for eta in &self.etas {
            let xp = x[eta.position] / eta.pivot;
            x[eta.position] = xp;
            if xp != 0.0 {
                for &(i, v) in &eta.entries {
                    x[i] -= v * xp;
                }
            }
        }
        a.copy_from_slice(&x);
    }

    /// Solves `B^T y = h` in place; `h` is indexed by basis position on entry
    /// and by row on exit.
    pub(crate) fn btran(&self, h: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = h[eta.position];
            for &(i, v) in &eta.entries {
                s -= v * h[i];
            }
            h[eta.position] = s / eta.pivot;
        }
        let mut z = vec![0.0; m];
        for k in 0..m {
            let zr = h[self.pivot_col[k]] / self.pivot_val[k];
            z[self.pivot_row[k]] = zr;
            if zr != 0.0 {
                for &(j, v) in &self.u_entries[self.u_start[k]..self.u_start[k + 1]] {
                    h[j] -= v * zr;
                }
            }
        }
        for k in (0..m).rev() {
            let entries = &self.l_entries[self.l_start[k]..self.l_start[k + 1]];
            if entries.is_empty() {
                continue;
            }
            let mut s = 0.0;
            for &(i, mult) in entries {
                s += mult * z[i];
            }
            z[self.pivot_row[k]] -= s;
        }
        h.copy_from_slice(&z);
    }

    /// Records that basis position `position` now holds a column whose
    /// FTRAN image (before this update) is `alpha`.
    pub(crate) fn push_eta(&mut self, position: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != position && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta {
            position,
            pivot: alpha[position],
            entries,
        });
    }
}

fn row_max(row: &[(usize, f64)]) -> f64 {
    row.iter().fold(0.0_f64, |m, &(_, v)| m.max(v.abs()))
}

fn select_pivot(
    rows: &[Vec<(usize, f64)>],
    col_rows: &[Vec<usize>],
    row_done: &[bool],
    row_lists: &CountLists,
    col_lists: &CountLists,
) -> Option<(usize, usize)> {
    let entry = |i: usize, c: usize| rows[i].iter().find(|&&(j, _)| j == c).map(|&(_, v)| v);

    // Column singletons: no elimination below the pivot.
    let mut c = col_lists.head[1];
    while c != NONE {
        if let Some(i) = col_rows[c].iter().copied().find(|&i| !row_done[i] && entry(i, c).is_some()) {
            let v = entry(i, c).unwrap_or(0.0);
            if v.abs() > PIVOT_ABS_TOL {
                return Some((i, c));
            }
        }
        c = col_lists.next[c];
    }
    // Row singletons: elimination without fill.
    let mut r = row_lists.head[1];
    while r != NONE {
        let (j, v) = rows[r][0];
        if v.abs() > PIVOT_ABS_TOL {
            return Some((r, j));
        }
        r = row_lists.next[r];
    }

    // Markowitz search over columns in increasing count order.
    let mut best: Option<(usize, usize, usize, f64)> = None;
    let mut extra = 0;
    for count in 2..col_lists.head.len() {
        let mut c = col_lists.head[count];
        while c != NONE {
            for &i in &col_rows[c] {
                if row_done[i] {
                    continue;
                }
                let Some(v) = entry(i, c) else { continue };
                let a = v.abs();
                if a <= PIVOT_ABS_TOL || a < PIVOT_THRESHOLD * row_max(&rows[i]) {
                    continue;
                }
                let cost = (rows[i].len() - 1) * (count - 1);
                let better = match best {
                    None => true,
                    Some((_, _, bc, ba)) => cost < bc || (cost == bc && a > ba),
                };
                if better {
                    best = Some((i, c, cost, a));
                }
            }
            if best.is_some() {
                extra += 1;
                if extra > SEARCH_DEPTH {
                    return best.map(|(i, c, _, _)| (i, c));
                }
            }
            c = col_lists.next[c];
        }
    }
    if let Some((i, c, _, _)) = best {
        return Some((i, c));
    }
    // Last resort: any entry above the absolute tolerance.
    let mut fallback: Option<(usize, usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if row_done[i] {
            continue;
        }
        for &(j, v) in row {
            if v.abs() > PIVOT_ABS_TOL && fallback.is_none_or(|(_, _, b)| v.abs() > b) {
                fallback = Some((i, j, v.abs()));
            }
        }
    }
    fallback.map(|(i, j, _)| (i, j))
}
