//! Bounded revised simplex.
//!
//! Every row `i` gets a logical variable `w_i = a_i x` whose bounds carry the
//! row sense and right-hand side, so the working system is `A x - w = 0` with
//! box constraints on all `n + m` variables. The primal simplex uses a
//! composite phase 1 (sum of infeasibilities) followed by phase 2; warm starts
//! after bound changes run the dual simplex from the supplied basis.

use log::{debug, trace};

use super::lu::Factor;
use super::problem::{Basis, LpProblem, LpResult, LpStatus, ObjSense, RowSense, VarStatus};
use super::scaling;

pub const TOL_FEAS: f64 = 1e-7;
pub const TOL_DUAL: f64 = 1e-7;
pub const TOL_GAP: f64 = 1e-8;
pub const TOL_CS: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-9;
const MAX_REPAIRS: usize = 3;

#[derive(Debug, Clone)]
pub struct LpOptions {
    /// Primal feasibility tolerance checked on the unscaled result.
    pub tol_feas: f64,
    /// Dual feasibility tolerance checked on the unscaled result.
    pub tol_dual: f64,
    /// Tolerances used inside the scaled iterations.
    pub inner_tol_feas: f64,
    pub inner_tol_dual: f64,
    /// Zero means `20 * (n + m) + 10_000`.
    pub max_iterations: usize,
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_threshold: usize,
    pub scaling: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol_feas: TOL_FEAS,
            tol_dual: TOL_DUAL,
            inner_tol_feas: 1e-9,
            inner_tol_dual: 1e-9,
            max_iterations: 0,
            refactor_interval: 100,
            bland_threshold: 1000,
            scaling: true,
        }
    }
}

/// Solves `p` from the all-logical basis.
pub fn solve_lp(p: &LpProblem) -> LpResult {
    solve_with(p, None, &LpOptions::default())
}

/// Solves `p` starting from `basis`; an incompatible basis degrades to a
/// cold start.
pub fn solve_lp_warm(p: &LpProblem, basis: &Basis) -> LpResult {
    solve_with(p, Some(basis), &LpOptions::default())
}

pub fn solve_with(p: &LpProblem, basis: Option<&Basis>, opts: &LpOptions) -> LpResult {
    if let Err(e) = p.validate() {
        debug!("rejecting malformed LP: {e}");
        return LpResult::failed(LpStatus::NumericalFailure, 0);
    }
    let mut s = Simplex::new(p, opts);
    let warm = basis.filter(|b| b.is_compatible(p));
    if basis.is_some() && warm.is_none() {
        debug!("warm basis incompatible with problem; cold start");
    }

    let mut outcome = match warm {
        Some(b) => {
            s.load_basis(b);
            if s.refactor().is_err() {
                return LpResult::failed(LpStatus::NumericalFailure, 0);
            }
            s.compute_xb();
            if s.dual() == Outcome::Failed {
                debug!("dual simplex failed; continuing with primal simplex");
                if s.refactor().is_err() {
                    return LpResult::failed(LpStatus::NumericalFailure, s.iterations);
                }
                s.compute_xb();
            }
            s.primal()
        }
        None => {
            s.slack_basis();
            if s.refactor().is_err() {
                return LpResult::failed(LpStatus::NumericalFailure, 0);
            }
            s.compute_xb();
            s.primal()
        }
    };

    for attempt in 0..=MAX_REPAIRS {
        match outcome {
            Outcome::Optimal => {
                let result = s.extract(p);
                if s.verify(p, &result) {
                    return result;
                }
                if attempt == MAX_REPAIRS {
                    break;
                }
                debug!("optimal basis failed verification, refactorizing (attempt {attempt})");
                if s.refactor().is_err() {
                    break;
                }
                s.compute_xb();
                outcome = s.primal();
            }
            Outcome::Infeasible => return LpResult::failed(LpStatus::Infeasible, s.iterations),
            Outcome::Unbounded => return LpResult::failed(LpStatus::Unbounded, s.iterations),
            Outcome::Failed => break,
        }
    }
    LpResult::failed(LpStatus::NumericalFailure, s.iterations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    Failed,
}

struct Simplex {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// Internal minimization costs, scaled, length n + m.
    cost: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    factor: Factor,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
    tol_p: f64,
    tol_d: f64,
    opts: LpOptions,
}

impl Simplex {
    fn new(p: &LpProblem, opts: &LpOptions) -> Self {
        let m = p.num_rows();
        let n = p.num_cols();

        let mut counts = vec![0usize; n + 1];
        for row in &p.rows {
            for &(j, a) in &row.coefs {
                if a != 0.0 {
                    counts[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut fill = col_start.clone();
        let mut col_idx = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if a != 0.0 {
                    col_idx[fill[j]] = i;
                    col_val[fill[j]] = a;
                    fill[j] += 1;
                }
            }
        }
        // Merge duplicate (row, column) entries.
        let (col_start, col_idx, col_val) = merge_duplicates(n, &col_start, &col_idx, &col_val);

        let (row_scale, col_scale) = if opts.scaling {
            scaling::geometric(m, n, &col_start, &col_idx, &col_val)
        } else {
            (vec![1.0; m], vec![1.0; n])
        };
        let mut col_val = col_val;
        for j in 0..n {
            for k in col_start[j]..col_start[j + 1] {
                col_val[k] *= row_scale[col_idx[k]] * col_scale[j];
            }
        }

        let mut rcounts = vec![0usize; m + 1];
        for &i in &col_idx {
            rcounts[i + 1] += 1;
        }
        for i in 0..m {
            rcounts[i + 1] += rcounts[i];
        }
        let row_start = rcounts.clone();
        let mut rfill = rcounts;
        let mut row_idx = vec![0; col_idx.len()];
        let mut row_val = vec![0.0; col_idx.len()];
        for j in 0..n {
            for k in col_start[j]..col_start[j + 1] {
                let i = col_idx[k];
                row_idx[rfill[i]] = j;
                row_val[rfill[i]] = col_val[k];
                rfill[i] += 1;
            }
        }

        let sign = match p.sense {
            ObjSense::Maximize => -1.0,
            ObjSense::Minimize => 1.0,
        };
        let mut cost = vec![0.0; n + m];
        let mut lo = vec![0.0; n + m];
        let mut up = vec![0.0; n + m];
        for j in 0..n {
            cost[j] = sign * p.objective[j] * col_scale[j];
            lo[j] = p.lower[j] / col_scale[j];
            up[j] = p.upper[j] / col_scale[j];
        }
        for (i, row) in p.rows.iter().enumerate() {
            let rhs = row.rhs * row_scale[i];
            let (l, u) = match row.sense {
                RowSense::Le => (f64::NEG_INFINITY, rhs),
                RowSense::Ge => (rhs, f64::INFINITY),
                RowSense::Eq => (rhs, rhs),
            };
            lo[n + i] = l;
            up[n + i] = u;
        }

        let max_iterations = if opts.max_iterations == 0 {
            20 * (n + m) + 10_000
        } else {
            opts.max_iterations
        };
        Self {
            m,
            n,
            col_start,
            col_idx,
            col_val,
            row_start,
            row_idx,
            row_val,
            row_scale,
            col_scale,
            cost,
            lo,
            up,
            x: vec![0.0; n + m],
            status: vec![VarStatus::AtLower; n + m],
            head: Vec::new(),
            factor: Factor::default(),
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            bland: false,
            tol_p: opts.inner_tol_feas,
            tol_d: opts.inner_tol_dual,
            opts: opts.clone(),
        }
    }

    fn nonbasic_status_for(&self, k: usize, preferred: VarStatus) -> VarStatus {
        let (l, u) = (self.lo[k], self.up[k]);
        match preferred {
            VarStatus::AtUpper if u.is_finite() => VarStatus::AtUpper,
            VarStatus::AtLower if l.is_finite() => VarStatus::AtLower,
            _ if l.is_finite() => VarStatus::AtLower,
            _ if u.is_finite() => VarStatus::AtUpper,
            _ => VarStatus::Free,
        }
    }

    fn place_nonbasic(&mut self, k: usize, st: VarStatus) {
        let st = self.nonbasic_status_for(k, st);
        self.status[k] = st;
        self.x[k] = match st {
            VarStatus::AtLower => self.lo[k],
            VarStatus::AtUpper => self.up[k],
            _ => 0.0,
        };
    }

    fn slack_basis(&mut self) {
        for j in 0..self.n {
            self.place_nonbasic(j, VarStatus::AtLower);
        }
        self.head = (self.n..self.n + self.m).collect();
        for k in self.n..self.n + self.m {
            self.status[k] = VarStatus::Basic;
        }
    }

    fn load_basis(&mut self, b: &Basis) {
        self.head.clear();
        for k in 0..self.n + self.m {
            match b.statuses[k] {
                VarStatus::Basic => {
                    self.status[k] = VarStatus::Basic;
                    self.head.push(k);
                }
                st => self.place_nonbasic(k, st),
            }
        }
    }

    fn load_column(&self, k: usize, dense: &mut [f64]) {
        dense.iter_mut().for_each(|v| *v = 0.0);
        if k < self.n {
            for p in self.col_start[k]..self.col_start[k + 1] {
                dense[self.col_idx[p]] = self.col_val[p];
            }
        } else {
            dense[k - self.n] = -1.0;
        }
    }

    fn sparse_column(&self, k: usize) -> Vec<(usize, f64)> {
        if k < self.n {
            (self.col_start[k]..self.col_start[k + 1])
                .map(|p| (self.col_idx[p], self.col_val[p]))
                .collect()
        } else {
            vec![(k - self.n, -1.0)]
        }
    }

    /// Factorizes the current basis, swapping in logicals for any columns
    /// that make it singular.
    fn refactor(&mut self) -> Result<(), ()> {
        for _ in 0..=self.m {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&k| self.sparse_column(k)).collect();
            match Factor::factorize(self.m, &cols) {
                Ok(f) => {
                    self.factor = f;
                    return Ok(());
                }
                Err(sing) => {
                    debug!("singular basis: replacing {} columns with logicals", sing.positions.len());
                    for (&pos, &row) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.head[pos];
                        let keep = if self.x[old] >= self.up[old] {
                            VarStatus::AtUpper
                        } else {
                            VarStatus::AtLower
                        };
                        self.place_nonbasic(old, keep);
                        let logical = self.n + row;
                        self.head[pos] = logical;
                        self.status[logical] = VarStatus::Basic;
                    }
                }
            }
        }
        Err(())
    }

    fn compute_xb(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for k in 0..self.n + self.m {
            if self.status[k] == VarStatus::Basic {
                continue;
            }
            let v = self.x[k];
            if v == 0.0 {
                continue;
            }
            if k < self.n {
                for p in self.col_start[k]..self.col_start[k + 1] {
                    rhs[self.col_idx[p]] -= self.col_val[p] * v;
                }
            } else {
                rhs[k - self.n] += v;
            }
        }
        self.factor.ftran(&mut rhs);
        for (pos, &k) in self.head.iter().enumerate() {
            self.x[k] = rhs[pos];
        }
    }

    fn duals(&self, basic_costs: &[f64]) -> Vec<f64> {
        let mut pi = basic_costs.to_vec();
        self.factor.btran(&mut pi);
        pi
    }

    fn reduced_cost(&self, k: usize, ck: f64, pi: &[f64]) -> f64 {
        if k < self.n {
            let mut d = ck;
            for p in self.col_start[k]..self.col_start[k + 1] {
                d -= pi[self.col_idx[p]] * self.col_val[p];
            }
            d
        } else {
            ck + pi[k - self.n]
        }
    }

    fn infeasibility(&self, k: usize) -> f64 {
        let v = self.x[k];
        if v < self.lo[k] - self.tol_p {
            self.lo[k] - v
        } else if v > self.up[k] + self.tol_p {
            v - self.up[k]
        } else {
            0.0
        }
    }

    fn maybe_refactor(&mut self) -> Result<(), ()> {
        if self.factor.num_etas() >= self.opts.refactor_interval {
            self.refactor()?;
            self.compute_xb();
        }
        Ok(())
    }

    fn note_step(&mut self, theta: f64) {
        if theta.abs() <= 1e-12 {
            self.degenerate_run += 1;
            if !self.bland && self.degenerate_run >= self.opts.bland_threshold {
                debug!("{} degenerate pivots, switching to Bland's rule", self.degenerate_run);
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    fn replace_basic(&mut self, pos: usize, entering: usize, leaving_status: VarStatus, alpha: &[f64]) {
        let leaving = self.head[pos];
        self.status[leaving] = if self.lo[leaving] == self.up[leaving] {
            VarStatus::AtLower
        } else {
            leaving_status
        };
        self.x[leaving] = match self.status[leaving] {
            VarStatus::AtUpper => self.up[leaving],
            _ => self.lo[leaving],
        };
        self.head[pos] = entering;
        self.status[entering] = VarStatus::Basic;
        self.factor.push_eta(pos, alpha);
    }

    /// Primal simplex from the current basis.
    fn primal(&mut self) -> Outcome {
        let m = self.m;
        let total = self.n + m;
        let mut basic_costs = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        loop {
            if self.iterations >= self.max_iterations {
                debug!("primal simplex hit the iteration limit");
                return Outcome::Failed;
            }
            if self.maybe_refactor().is_err() {
                return Outcome::Failed;
            }

            let mut phase1 = false;
            for (pos, &k) in self.head.iter().enumerate() {
                let v = self.x[k];
                basic_costs[pos] = if v < self.lo[k] - self.tol_p {
                    phase1 = true;
                    -1.0
                } else if v > self.up[k] + self.tol_p {
                    phase1 = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase1 {
                for (pos, &k) in self.head.iter().enumerate() {
                    basic_costs[pos] = self.cost[k];
                }
            }
            let pi = self.duals(&basic_costs);

            // Pricing.
            let mut entering: Option<(usize, f64, f64)> = None;
            for k in 0..total {
                let st = self.status[k];
                if st == VarStatus::Basic || self.lo[k] == self.up[k] {
                    continue;
                }
                let ck = if phase1 { 0.0 } else { self.cost[k] };
                let d = self.reduced_cost(k, ck, &pi);
                let dir = match st {
                    VarStatus::AtLower if d < -self.tol_d => 1.0,
                    VarStatus::AtUpper if d > self.tol_d => -1.0,
                    VarStatus::Free if d.abs() > self.tol_d => -d.signum(),
                    _ => continue,
                };
                if self.bland {
                    entering = Some((k, d, dir));
                    break;
                }
                if entering.is_none_or(|(_, bd, _)| d.abs() > bd.abs()) {
                    entering = Some((k, d, dir));
                }
            }
            let Some((q, _dq, dir)) = entering else {
                return if phase1 { Outcome::Infeasible } else { Outcome::Optimal };
            };

            self.load_column(q, &mut alpha);
            self.factor.ftran(&mut alpha);

            // Ratio test (Harris two-pass, or textbook under Bland).
            let mut theta_max = f64::INFINITY;
            let mut cands: Vec<(usize, f64, f64, VarStatus)> = Vec::new();
            for pos in 0..m {
                let a = alpha[pos];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let k = self.head[pos];
                let rate = -dir * a;
                let v = self.x[k];
                let (dist, to) = if rate < 0.0 {
                    if v > self.up[k] + self.tol_p {
                        (v - self.up[k], VarStatus::AtUpper)
                    } else if v < self.lo[k] - self.tol_p || self.lo[k] == f64::NEG_INFINITY {
                        continue;
                    } else {
                        (v - self.lo[k], VarStatus::AtLower)
                    }
                } else if v < self.lo[k] - self.tol_p {
                    (self.lo[k] - v, VarStatus::AtLower)
                } else if v > self.up[k] + self.tol_p || self.up[k] == f64::INFINITY {
                    continue;
                } else {
                    (self.up[k] - v, VarStatus::AtUpper)
                };
                let dist = dist.max(0.0);
                let relaxed = if self.bland { dist } else { dist + self.tol_p };
                theta_max = theta_max.min(relaxed / rate.abs());
                cands.push((pos, dist, rate, to));
            }
            let range = self.up[q] - self.lo[q];
            if range.is_finite() && range <= theta_max {
                // Entering variable reaches its opposite bound first.
                let step = dir * range;
                self.x[q] += step;
                self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                for pos in 0..m {
                    let k = self.head[pos];
                    self.x[k] -= alpha[pos] * step;
                }
                self.iterations += 1;
                self.note_step(range);
                continue;
            }
            if theta_max.is_infinite() {
                return if phase1 { Outcome::Failed } else { Outcome::Unbounded };
            }
            let mut leave: Option<(usize, f64, f64, VarStatus)> = None;
            for &(pos, dist, rate, to) in &cands {
                let ratio = dist / rate.abs();
                if ratio > theta_max {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((bpos, bdist, brate, _)) => {
                        if self.bland {
                            let br = bdist / brate.abs();
                            ratio < br || (ratio == br && self.head[pos] < self.head[bpos])
                        } else {
                            rate.abs() > brate.abs()
                        }
                    }
                };
                if better {
                    leave = Some((pos, dist, rate, to));
                }
            }
            let Some((r, dist, rate, to)) = leave else {
                return Outcome::Failed;
            };
            let theta = dist / rate.abs();
            let step = dir * theta;
            self.x[q] += step;
            for pos in 0..m {
                let k = self.head[pos];
                self.x[k] -= alpha[pos] * step;
            }
            self.replace_basic(r, q, to, &alpha);
            self.iterations += 1;
            self.note_step(theta);
            trace!("primal pivot {}: in {} out pos {} theta {:.3e}", self.iterations, q, r, theta);
        }
    }

    /// Dual simplex from the current basis. Returns `Optimal` when the basis
    /// is primal feasible, `Infeasible` when a row certifies infeasibility,
    /// and `Failed` on numerical trouble or when the starting basis is not
    /// dual feasible (the caller then continues with the primal simplex).
    fn dual(&mut self) -> Outcome {
        let m = self.m;
        let total = self.n + m;
        let mut basic_costs = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut d = vec![0.0; total];
        let mut flipped_once = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::Failed;
            }
            if self.maybe_refactor().is_err() {
                return Outcome::Failed;
            }
            for (pos, &k) in self.head.iter().enumerate() {
                basic_costs[pos] = self.cost[k];
            }
            let pi = self.duals(&basic_costs);
            let mut flips = false;
            for k in 0..total {
                let st = self.status[k];
                if st == VarStatus::Basic {
                    d[k] = 0.0;
                    continue;
                }
                d[k] = self.reduced_cost(k, self.cost[k], &pi);
                if self.lo[k] == self.up[k] {
                    continue;
                }
                let wrong = match st {
                    VarStatus::AtLower => d[k] < -self.tol_d,
                    VarStatus::AtUpper => d[k] > self.tol_d,
                    VarStatus::Free => d[k].abs() > self.tol_d,
                    VarStatus::Basic => false,
                };
                if wrong {
                    let boxed = self.lo[k].is_finite() && self.up[k].is_finite();
                    if !boxed || flipped_once {
                        return Outcome::Unbounded;
                    }
                    let to = if st == VarStatus::AtLower { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.place_nonbasic(k, to);
                    flips = true;
                }
            }
            if flips {
                flipped_once = true;
                self.compute_xb();
                continue;
            }
            flipped_once = false;

            // Leaving row: largest primal infeasibility.
            let mut leave: Option<(usize, f64)> = None;
            for (pos, &k) in self.head.iter().enumerate() {
                let inf = self.infeasibility(k);
                if inf > 0.0 && leave.is_none_or(|(_, b)| inf > b) {
                    leave = Some((pos, inf));
                }
            }
            let Some((r, _)) = leave else {
                return Outcome::Optimal;
            };
            let kr = self.head[r];
            let to_lower = self.x[kr] < self.lo[kr];
            let target = if to_lower { self.lo[kr] } else { self.up[kr] };

            let mut rho = vec![0.0; m];
            rho[r] = 1.0;
            self.factor.btran(&mut rho);
            let mut row_alpha = vec![0.0; total];
            for i in 0..m {
                let ri = rho[i];
                if ri == 0.0 {
                    continue;
                }
                for p in self.row_start[i]..self.row_start[i + 1] {
                    row_alpha[self.row_idx[p]] += ri * self.row_val[p];
                }
                row_alpha[self.n + i] = -ri;
            }

            // Ratio test on reduced costs.
            let mut theta_max = f64::INFINITY;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for k in 0..total {
                let st = self.status[k];
                if st == VarStatus::Basic || self.lo[k] == self.up[k] {
                    continue;
                }
                let a = row_alpha[k];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                // Sign of a that moves x_r toward its violated bound when k
                // moves in its feasible direction.
                let ok = match (st, to_lower) {
                    (VarStatus::AtLower, true) => a < 0.0,
                    (VarStatus::AtUpper, true) => a > 0.0,
                    (VarStatus::AtLower, false) => a > 0.0,
                    (VarStatus::AtUpper, false) => a < 0.0,
                    (VarStatus::Free, _) => true,
                    (VarStatus::Basic, _) => false,
                };
                if !ok {
                    continue;
                }
                let dk = match st {
                    VarStatus::AtLower => d[k].max(0.0),
                    VarStatus::AtUpper => (-d[k]).max(0.0),
                    _ => d[k].abs(),
                };
                theta_max = theta_max.min((dk + self.tol_d) / a.abs());
                cands.push((k, dk, a));
            }
            if cands.is_empty() {
                return Outcome::Infeasible;
            }
            let mut entering: Option<(usize, f64)> = None;
            for &(k, dk, a) in &cands {
                if dk / a.abs() > theta_max {
                    continue;
                }
                if entering.is_none_or(|(_, ba)| a.abs() > ba.abs()) {
                    entering = Some((k, a));
                }
            }
            let Some((q, a_rq)) = entering else {
                return Outcome::Failed;
            };

            self.load_column(q, &mut alpha);
            self.factor.ftran(&mut alpha);
            let a_col = alpha[r];
            if (a_col - a_rq).abs() > 1e-6 * (1.0 + a_rq.abs()) {
                debug!("dual simplex pivot mismatch {a_col:.3e} vs {a_rq:.3e}; refactorizing");
                if self.refactor().is_err() {
                    return Outcome::Failed;
                }
                self.compute_xb();
                continue;
            }
            let delta = (self.x[kr] - target) / a_col;
            self.x[q] += delta;
            for pos in 0..m {
                let k = self.head[pos];
                self.x[k] -= alpha[pos] * delta;
            }
            let st = if to_lower { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.replace_basic(r, q, st, &alpha);
            self.iterations += 1;
            self.note_step(delta);
        }
    }

    fn extract(&self, p: &LpProblem) -> LpResult {
        let (n, m) = (self.n, self.m);
        let mut primal = vec![0.0; n];
        for j in 0..n {
            primal[j] = match self.status[j] {
                VarStatus::AtLower => p.lower[j],
                VarStatus::AtUpper => p.upper[j],
                VarStatus::Free => 0.0,
                VarStatus::Basic => self.x[j] * self.col_scale[j],
            };
        }
        let basic_costs: Vec<f64> = self.head.iter().map(|&k| self.cost[k]).collect();
        let pi = self.duals(&basic_costs);
        let sign = match p.sense {
            ObjSense::Maximize => -1.0,
            ObjSense::Minimize => 1.0,
        };
        let duals: Vec<f64> = (0..m).map(|i| sign * pi[i] * self.row_scale[i]).collect();
        let mut reduced_costs = p.objective.clone();
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                reduced_costs[j] -= duals[i] * a;
            }
        }
        let objective = p.objective_value(&primal);
        LpResult {
            status: LpStatus::Optimal,
            primal,
            duals,
            reduced_costs,
            objective,
            basis: Some(Basis {
                statuses: self.status.clone(),
            }),
            iterations: self.iterations,
        }
    }

    fn verify(&self, p: &LpProblem, r: &LpResult) -> bool {
        let cert = super::problem::certify(p, r);
        let ok = cert.primal_infeasibility <= self.opts.tol_feas
            && cert.dual_infeasibility <= self.opts.tol_dual;
        if !ok {
            debug!(
                "verification failed: primal {:.2e}, dual {:.2e}",
                cert.primal_infeasibility, cert.dual_infeasibility
            );
        }
        ok
    }
}

fn merge_duplicates(
    n: usize,
    start: &[usize],
    idx: &[usize],
    val: &[f64],
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut out_start = vec![0];
    let mut out_idx = Vec::with_capacity(idx.len());
    let mut out_val = Vec::with_capacity(val.len());
    for j in 0..n {
        let mut entries: Vec<(usize, f64)> = (start[j]..start[j + 1]).map(|k| (idx[k], val[k])).collect();
        entries.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for (i, v) in entries {
            if last == Some(i) {
                *out_val.last_mut().expect("entry") += v;
            } else {
                out_idx.push(i);
                out_val.push(v);
                last = Some(i);
            }
        }
        out_start.push(out_idx.len());
    }
    (out_start, out_idx, out_val)
}
