//! Best-bound branch-and-bound over the integer columns of a MILP.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::lp::{solve_lp, solve_lp_warm, Basis, LpProblem, LpResult, LpStatus, ObjSense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrality {
    Continuous,
    Binary,
    Integer,
}

/// An LP together with the integrality class of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct MipProblem {
    pub lp: LpProblem,
    pub integrality: Vec<Integrality>,
    /// Branching priority per column; fractional columns of the highest
    /// class present are branched on first. Empty means all equal.
    pub priority: Vec<u8>,
}

impl MipProblem {
    pub fn new(lp: LpProblem, integrality: Vec<Integrality>) -> Self {
        Self { lp, integrality, priority: Vec::new() }
    }

    pub fn integer_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.integrality
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Integrality::Continuous)
            .map(|(j, _)| j)
    }

    /// Largest row or bound violation of `x`, ignoring integrality.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lp.lower[j] - v).max(v - self.lp.upper[j]);
        }
        for row in &self.lp.rows {
            worst = worst.max(row.violation(x));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRule {
    MostFractional,
    PseudoCost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BbConfig {
    pub mip_gap_rel: f64,
    pub node_limit: usize,
    pub time_limit: f64,
    pub branch_rule: BranchRule,
    pub integrality_tol: f64,
    /// Nodes between progress log lines; zero disables them.
    pub log_interval: usize,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            mip_gap_rel: 1e-4,
            node_limit: 200_000,
            time_limit: 120.0,
            branch_rule: BranchRule::MostFractional,
            integrality_tol: 1e-6,
            log_interval: 1000,
        }
    }
}

impl BbConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mip_gap_rel >= 0.0) {
            return Err(format!("mip_gap_rel must be >= 0, got {}", self.mip_gap_rel));
        }
        if self.node_limit < 1 {
            return Err("node_limit must be >= 1".into());
        }
        if !(self.time_limit >= 1.0) {
            return Err(format!("time_limit must be >= 1 s, got {}", self.time_limit));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    /// Tree exhausted: the incumbent is optimal.
    Optimal,
    /// Stopped with open nodes because the gap reached `mip_gap_rel`.
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
    Unbounded,
    /// Some subtrees could not be solved reliably; the bound accounts for them.
    NumericalFailure,
}

impl MilpStatus {
    pub fn has_certified_gap(self) -> bool {
        matches!(self, MilpStatus::Optimal | MilpStatus::GapLimit)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent column values; empty when no feasible point was found.
    pub primal: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
}

impl MilpSolution {
    pub fn has_solution(&self) -> bool {
        !self.primal.is_empty() || matches!(self.status, MilpStatus::Optimal | MilpStatus::GapLimit)
    }
}

pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    (bound - objective).abs() / objective.abs().max(1.0)
}

/// What happened at one explored node, reported to an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEvent {
    pub depth: usize,
    /// LP bound of the parent (root: +inf in the maximization sense).
    pub parent_bound: f64,
    /// LP objective at this node, `None` if infeasible or failed.
    pub lp_bound: Option<f64>,
    pub incumbent: Option<f64>,
}

struct Node {
    id: usize,
    depth: usize,
    /// Bound in maximization orientation.
    bound: f64,
    changes: Rc<BoundChanges>,
    basis: Option<Rc<Basis>>,
    /// Branching that created the node: (column, parent value, up branch).
    origin: Option<(usize, f64, bool)>,
}

/// Persistent list of bound changes from the root to a node.
struct BoundChanges {
    col: usize,
    lower: f64,
    upper: f64,
    parent: Option<Rc<BoundChanges>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

#[derive(Default, Clone, Copy)]
struct PseudoCost {
    down_sum: f64,
    down_n: u32,
    up_sum: f64,
    up_n: u32,
}

struct Search<'a> {
    p: &'a MipProblem,
    cfg: &'a BbConfig,
    /// +1 for maximization, -1 for minimization; internal values are
    /// `orient * objective` so larger is always better.
    orient: f64,
    work: LpProblem,
    touched: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    pseudo: Vec<PseudoCost>,
    next_id: usize,
    unresolved_bound: f64,
    failures: usize,
    since_rounding: usize,
    /// Sub-MIP searches are only launched from the top-level tree.
    heuristics: bool,
    since_neighborhood: usize,
    neighborhood_interval: usize,
    /// Root bounds tightened by reduced-cost fixing.
    base_lower: Vec<f64>,
    base_upper: Vec<f64>,
    root: Option<LpResult>,
    deadline: Instant,
}

/// Nodes between rounding attempts on fractional LP points.
const ROUNDING_INTERVAL: usize = 20;
/// Nodes between neighborhood sub-MIP searches around the incumbent.
const NEIGHBORHOOD_INTERVAL: usize = 100;
/// Share of the bound-to-incumbent gap a plunge may fall behind.
const PLUNGE_SLACK: f64 = 0.25;
const NEIGHBORHOOD_NODES: usize = 400;
const NEIGHBORHOOD_MAX_INTERVAL: usize = 800;
/// Minimum share of integer columns the neighborhood must fix.
const NEIGHBORHOOD_MIN_FIXED: f64 = 0.6;

/// Solves the MILP by branch-and-bound with LP relaxations.
pub fn solve_milp(p: &MipProblem, cfg: &BbConfig) -> MilpSolution {
    solve_milp_observed(p, cfg, |_| {})
}

/// As [`solve_milp`], calling `observe` after every node LP.
pub fn solve_milp_observed<F: FnMut(&NodeEvent)>(
    p: &MipProblem,
    cfg: &BbConfig,
    observe: F,
) -> MilpSolution {
    search(p, cfg, observe, true, None)
}

fn search<F: FnMut(&NodeEvent)>(
    p: &MipProblem,
    cfg: &BbConfig,
    mut observe: F,
    heuristics: bool,
    start_incumbent: Option<(f64, Vec<f64>)>,
) -> MilpSolution {
    let start = Instant::now();
    let time_limit = Duration::from_secs_f64(cfg.time_limit.max(0.0));
    let orient = match p.lp.sense {
        ObjSense::Maximize => 1.0,
        ObjSense::Minimize => -1.0,
    };
    let mut s = Search {
        p,
        cfg,
        orient,
        work: p.lp.clone(),
        touched: Vec::new(),
        incumbent: start_incumbent,
        pseudo: vec![PseudoCost::default(); p.lp.num_cols()],
        next_id: 1,
        unresolved_bound: f64::NEG_INFINITY,
        failures: 0,
        since_rounding: ROUNDING_INTERVAL,
        heuristics,
        since_neighborhood: 0,
        neighborhood_interval: NEIGHBORHOOD_INTERVAL,
        base_lower: p.lp.lower.clone(),
        base_upper: p.lp.upper.clone(),
        root: None,
        deadline: start + time_limit,
    };

    let root = solve_lp(&p.lp);
    let mut nodes_explored = 1;
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return s.finish(MilpStatus::Infeasible, f64::NEG_INFINITY, 1),
        LpStatus::Unbounded => return s.finish(MilpStatus::Unbounded, f64::INFINITY, 1),
        LpStatus::NumericalFailure => {
            return s.finish(MilpStatus::NumericalFailure, f64::INFINITY, 1)
        }
    }
    observe(&NodeEvent {
        depth: 0,
        parent_bound: f64::INFINITY,
        lp_bound: Some(root.objective),
        incumbent: None,
    });
    s.root = Some(root.clone());
    if s.incumbent.is_some() {
        s.fix_by_reduced_cost();
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    // Depth-first stack. Until the first incumbent it holds the whole
    // search; afterwards only the child being plunged into.
    let mut dive: Vec<Node> = Vec::new();
    let mut drained = false;
    if let Some(children) = s.process(&root, 0, None) {
        s.enqueue(children, &mut dive);
    }
    let mut status = None;
    let mut last_log = 0;

    loop {
        let open_bound = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
        if s.incumbent.is_some() && !drained {
            heap.extend(dive.drain(..));
            drained = true;
            continue;
        }
        let dive_bound = dive.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
        let global = open_bound.max(dive_bound).max(s.unresolved_bound);
        if let Some((inc, _)) = &s.incumbent {
            let inc = *inc;
            // Every open node would be pruned: the tree is exhausted.
            if (heap.is_empty() && dive.is_empty()) || s.prunable(global) {
                break;
            }
            if global - inc <= cfg.mip_gap_rel * inc.abs().max(1.0) {
                status = Some(MilpStatus::GapLimit);
                break;
            }
        } else if heap.is_empty() && dive.is_empty() {
            break;
        }
        if nodes_explored >= cfg.node_limit {
            status = Some(MilpStatus::NodeLimit);
            break;
        }
        if start.elapsed() >= time_limit {
            status = Some(MilpStatus::TimeLimit);
            break;
        }
        if cfg.log_interval > 0 && nodes_explored - last_log >= cfg.log_interval {
            last_log = nodes_explored;
            let inc = s.incumbent.as_ref().map(|(v, _)| orient * v);
            info!(
                "nodes {nodes_explored} open {} bound {:.6} incumbent {:?} gap {:?}",
                heap.len(),
                orient * global,
                inc,
                s.incumbent.as_ref().map(|(v, _)| relative_gap(*v, global))
            );
        }

        let node = match dive.pop() {
            Some(n) => n,
            None => heap.pop().expect("non-empty"),
        };
        if s.prunable(node.bound) {
            continue;
        }
        s.apply(&node.changes);
        let result = match &node.basis {
            Some(b) => solve_lp_warm(&s.work, b),
            None => solve_lp(&s.work),
        };
        let result = if result.status == LpStatus::NumericalFailure {
            debug!("node {} warm solve failed; retrying cold", node.id);
            solve_lp(&s.work)
        } else {
            result
        };
        nodes_explored += 1;
        let lp_bound = (result.status == LpStatus::Optimal).then_some(result.objective);
        observe(&NodeEvent {
            depth: node.depth,
            parent_bound: orient * node.bound,
            lp_bound,
            incumbent: s.incumbent.as_ref().map(|(v, _)| orient * v),
        });
        match result.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded | LpStatus::NumericalFailure => {
                warn!("node {} LP {:?}; keeping its parent bound as unresolved", node.id, result.status);
                s.failures += 1;
                s.unresolved_bound = s.unresolved_bound.max(node.bound);
                continue;
            }
        }
        if let Some((col, parent_value, up)) = node.origin {
            s.record_pseudo_cost(col, parent_value, up, node.bound - orient * result.objective);
        }
        let had_incumbent = s.incumbent.is_some();
        if let Some(children) = s.process(&result, node.depth, Some(&node.changes)) {
            if had_incumbent {
                // Plunge into the nearest-rounding child; its sibling waits
                // in the best-bound queue.
                let [first, second] = children;
                heap.push(second);
                // Abandon the plunge once it falls well behind the best open node.
                let best = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
                let inc = s.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| *v);
                if first.bound >= best - PLUNGE_SLACK * (best - inc).max(0.0) {
                    dive.push(first);
                } else {
                    heap.push(first);
                }
            } else {
                s.enqueue(children, &mut dive);
            }
        }
    }

    let open_bound = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
    let dive_bound = dive.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let global = open_bound.max(dive_bound).max(s.unresolved_bound);
    let status = status.unwrap_or(if s.failures > 0 {
        MilpStatus::NumericalFailure
    } else if s.incumbent.is_some() {
        MilpStatus::Optimal
    } else {
        MilpStatus::Infeasible
    });
    s.finish(status, global, nodes_explored)
}

impl Search<'_> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            Some((inc, _)) => bound <= inc + 1e-9 * inc.abs().max(1.0),
            None => false,
        }
    }

    fn apply(&mut self, changes: &Rc<BoundChanges>) {
        for &j in &self.touched {
            self.work.lower[j] = self.base_lower[j];
            self.work.upper[j] = self.base_upper[j];
        }
        self.touched.clear();
        // Walk root-ward; the first change seen for a column is the newest.
        let mut seen = std::collections::HashSet::new();
        let mut cur = Some(changes.clone());
        while let Some(c) = cur {
            if seen.insert(c.col) {
                self.work.lower[c.col] = c.lower;
                self.work.upper[c.col] = c.upper;
                self.touched.push(c.col);
            }
            cur = c.parent.clone();
        }
    }

    fn record_pseudo_cost(&mut self, col: usize, value: f64, up: bool, degradation: f64) {
        let pc = &mut self.pseudo[col];
        let f = value - value.floor();
        let dist = if up { 1.0 - f } else { f };
        if dist <= 1e-9 {
            return;
        }
        let per_unit = degradation.max(0.0) / dist;
        if up {
            pc.up_sum += per_unit;
            pc.up_n += 1;
        } else {
            pc.down_sum += per_unit;
            pc.down_n += 1;
        }
    }

    /// Handles an optimal node LP: prunes, records incumbents, or returns
    /// the two children of the chosen branching column.
    fn process(
        &mut self,
        r: &LpResult,
        depth: usize,
        changes: Option<&Rc<BoundChanges>>,
    ) -> Option<[Node; 2]> {
        let value = self.orient * r.objective;
        if self.prunable(value) {
            return None;
        }
        let tol = self.cfg.integrality_tol;
        let mut fractional: Vec<(usize, f64)> = Vec::new();
        for j in self.p.integer_columns() {
            let v = r.primal[j];
            let f = v - v.floor();
            if f > tol && f < 1.0 - tol {
                fractional.push((j, v));
            }
        }
        if fractional.is_empty() {
            self.try_incumbent(r);
            return None;
        }
        self.since_rounding += 1;
        if self.since_rounding >= ROUNDING_INTERVAL {
            self.since_rounding = 0;
            self.try_priority_rounding(r);
            if self.prunable(value) {
                return None;
            }
        }
        self.since_neighborhood += 1;
        if self.heuristics && self.incumbent.is_some() && self.since_neighborhood >= self.neighborhood_interval {
            self.since_neighborhood = 0;
            self.search_neighborhood(r);
            if self.prunable(value) {
                return None;
            }
        }
        if !self.p.priority.is_empty() {
            let top = fractional.iter().map(|&(j, _)| self.p.priority[j]).max().unwrap_or(0);
            fractional.retain(|&(j, _)| self.p.priority[j] == top);
        }
        let (col, v) = self.choose_branch(&fractional);
        let basis = r.basis.clone().map(Rc::new);
        let parent = changes.cloned();
        let down = Rc::new(BoundChanges {
            col,
            lower: self.work.lower[col],
            upper: v.floor(),
            parent: parent.clone(),
        });
        let up = Rc::new(BoundChanges {
            col,
            lower: v.ceil(),
            upper: self.work.upper[col],
            parent,
        });
        let mk = |s: &mut Self, changes: Rc<BoundChanges>, is_up: bool| {
            let id = s.next_id;
            s.next_id += 1;
            Node {
                id,
                depth: depth + 1,
                bound: value,
                changes,
                basis: basis.clone(),
                origin: Some((col, v, is_up)),
            }
        };
        let d = mk(self, down, false);
        let u = mk(self, up, true);
        // Nearest-rounding child first: it is the one the dive follows.
        if v - v.floor() >= 0.5 {
            Some([u, d])
        } else {
            Some([d, u])
        }
    }

    fn enqueue(&self, children: [Node; 2], dive: &mut Vec<Node>) {
        let [first, second] = children;
        dive.push(second);
        dive.push(first);
    }

    fn choose_branch(&self, fractional: &[(usize, f64)]) -> (usize, f64) {
        let most_fractional = || {
            let mut best = fractional[0];
            let mut best_score = -1.0;
            for &(j, v) in fractional {
                let f = v - v.floor();
                let score = f.min(1.0 - f);
                if score > best_score + 1e-12 {
                    best = (j, v);
                    best_score = score;
                }
            }
            best
        };
        match self.cfg.branch_rule {
            BranchRule::MostFractional => most_fractional(),
            BranchRule::PseudoCost => {
                let mut best: Option<((usize, f64), f64)> = None;
                for &(j, v) in fractional {
                    let pc = self.pseudo[j];
                    if pc.down_n == 0 || pc.up_n == 0 {
                        continue;
                    }
                    let f = v - v.floor();
                    let down = pc.down_sum / pc.down_n as f64 * f;
                    let up = pc.up_sum / pc.up_n as f64 * (1.0 - f);
                    let score = down.max(1e-6) * up.max(1e-6);
                    if best.is_none_or(|(_, b)| score > b + 1e-12) {
                        best = Some(((j, v), score));
                    }
                }
                best.map_or_else(most_fractional, |(c, _)| c)
            }
        }
    }

    /// Fixes every integer column on which the node LP agrees with the
    /// incumbent and solves the remaining sub-MIP with a small node budget.
    fn search_neighborhood(&mut self, r: &LpResult) {
        let Some((inc_value, inc)) = self.incumbent.clone() else {
            return;
        };
        let remaining = self.deadline.saturating_duration_since(Instant::now()).as_secs_f64();
        if remaining < 1.0 {
            return;
        }
        let mut sub = self.p.clone();
        sub.lp.lower.clone_from(&self.base_lower);
        sub.lp.upper.clone_from(&self.base_upper);
        let (mut fixed, mut total) = (0usize, 0usize);
        for j in self.p.integer_columns() {
            total += 1;
            if (r.primal[j] - inc[j]).abs() <= self.cfg.integrality_tol {
                sub.lp.lower[j] = inc[j];
                sub.lp.upper[j] = inc[j];
                fixed += 1;
            }
        }
        if fixed == total || (fixed as f64) < NEIGHBORHOOD_MIN_FIXED * total as f64 {
            return;
        }
        let cfg = BbConfig {
            mip_gap_rel: 0.0,
            node_limit: NEIGHBORHOOD_NODES,
            time_limit: remaining.min(10.0),
            log_interval: 0,
            ..self.cfg.clone()
        };
        let found = search(&sub, &cfg, |_| {}, false, Some((inc_value, inc)));
        if !found.has_solution() || self.p.max_violation(&found.primal) > 1e-6 {
            return;
        }
        let value = self.orient * self.p.lp.objective_value(&found.primal);
        if value > inc_value + 1e-9 * inc_value.abs().max(1.0) {
            debug!("neighborhood search improved incumbent to {:.6}", self.orient * value);
            self.set_incumbent(value, found.primal);
            self.neighborhood_interval = NEIGHBORHOOD_INTERVAL;
        } else {
            self.neighborhood_interval = (self.neighborhood_interval * 2).min(NEIGHBORHOOD_MAX_INTERVAL);
        }
    }

    /// Pins the highest-priority integer columns at their rounded values
    /// and re-solves; the lower classes often come out integral on their own.
    fn try_priority_rounding(&mut self, r: &LpResult) {
        let class = |j: usize| self.p.priority.get(j).copied().unwrap_or(0);
        let Some(top) = self.p.integer_columns().map(class).max() else {
            return;
        };
        let mut fixed = self.work.clone();
        for j in self.p.integer_columns() {
            if class(j) == top {
                let v = r.primal[j].round().clamp(fixed.lower[j], fixed.upper[j]);
                fixed.lower[j] = v;
                fixed.upper[j] = v;
            }
        }
        let rr = match &r.basis {
            Some(b) => solve_lp_warm(&fixed, b),
            None => solve_lp(&fixed),
        };
        if rr.status != LpStatus::Optimal || self.prunable(self.orient * rr.objective) {
            return;
        }
        let tol = self.cfg.integrality_tol;
        let integral = self.p.integer_columns().all(|j| {
            let f = rr.primal[j] - rr.primal[j].floor();
            f <= tol || f >= 1.0 - tol
        });
        if integral {
            self.try_incumbent(&rr);
        }
    }

    fn try_incumbent(&mut self, r: &LpResult) {
        let mut x = r.primal.clone();
        for j in self.p.integer_columns() {
            x[j] = x[j].round();
        }
        let mut candidate = None;
        if self.p.max_violation(&x) <= 1e-6 {
            candidate = Some(x);
        } else {
            // Re-optimize the continuous part with integers pinned.
            let mut fixed = self.work.clone();
            for j in self.p.integer_columns() {
                fixed.lower[j] = x[j];
                fixed.upper[j] = x[j];
            }
            let rr = match &r.basis {
                Some(b) => solve_lp_warm(&fixed, b),
                None => solve_lp(&fixed),
            };
            if rr.status == LpStatus::Optimal {
                let mut y = rr.primal;
                for j in self.p.integer_columns() {
                    y[j] = x[j];
                }
                if self.p.max_violation(&y) <= 1e-6 {
                    candidate = Some(y);
                }
            }
        }
        let Some(x) = candidate else {
            debug!("integral LP point failed replay; discarded");
            return;
        };
        let value = self.orient * self.p.lp.objective_value(&x);
        if self.incumbent.as_ref().is_none_or(|(inc, _)| value > *inc) {
            debug!("new incumbent {:.6}", self.orient * value);
            self.set_incumbent(value, x);
        }
    }

    fn set_incumbent(&mut self, value: f64, x: Vec<f64>) {
        self.incumbent = Some((value, x));
        self.fix_by_reduced_cost();
    }

    /// Fixes integer columns whose unit move away from their root bound
    /// would drop the root bound below the incumbent.
    fn fix_by_reduced_cost(&mut self) {
        let Some(root) = self.root.take() else {
            return;
        };
        let z = self.orient * root.objective;
        let mut count = 0;
        for j in self.p.integer_columns() {
            let (lo, hi) = (self.base_lower[j], self.base_upper[j]);
            if lo == hi {
                continue;
            }
            let x = root.primal[j];
            let d = self.orient * root.reduced_costs[j];
            if (x - lo).abs() <= 1e-9 && d < 0.0 && self.prunable(z + d) {
                self.base_upper[j] = lo;
            } else if (x - hi).abs() <= 1e-9 && d > 0.0 && self.prunable(z - d) {
                self.base_lower[j] = hi;
            } else {
                continue;
            }
            self.work.lower[j] = self.base_lower[j];
            self.work.upper[j] = self.base_upper[j];
            self.touched.push(j);
            count += 1;
        }
        if count > 0 {
            debug!("reduced-cost fixing fixed {count} columns");
        }
        self.root = Some(root);
    }

    fn finish(self, status: MilpStatus, global: f64, nodes: usize) -> MilpSolution {
        let orient = self.orient;
        match self.incumbent {
            Some((inc, x)) => {
                let bound = if matches!(status, MilpStatus::Optimal) { inc } else { global.max(inc) };
                MilpSolution {
                    status,
                    objective: orient * inc,
                    bound: orient * bound,
                    gap: relative_gap(inc, bound),
                    primal: x,
                    nodes_explored: nodes,
                }
            }
            None => MilpSolution {
                status,
                primal: Vec::new(),
                objective: f64::NAN,
                bound: orient * global,
                gap: f64::INFINITY,
                nodes_explored: nodes,
            },
        }
    }
}

/// Maximum number of binary columns [`enumerate_oracle`] accepts.
pub const ORACLE_BINARY_CAP: usize = 16;

/// Exact optimum by enumerating every assignment of the binary columns and
/// solving each resulting LP from scratch. Meant for tests.
pub fn enumerate_oracle(p: &MipProblem) -> Result<MilpSolution, ModelError> {
    let mut binaries = Vec::new();
    for (j, c) in p.integrality.iter().enumerate() {
        match c {
            Integrality::Binary => binaries.push(j),
            Integrality::Integer => return Err(ModelError::GeneralInteger(j)),
            Integrality::Continuous => {}
        }
    }
    if binaries.len() > ORACLE_BINARY_CAP {
        return Err(ModelError::TooManyBinaries {
            count: binaries.len(),
            cap: ORACLE_BINARY_CAP,
        });
    }
    let orient = match p.lp.sense {
        ObjSense::Maximize => 1.0,
        ObjSense::Minimize => -1.0,
    };
    let mut work = p.lp.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 1usize << binaries.len();
    for mask in 0..total {
        let mut in_range = true;
        for (b, &j) in binaries.iter().enumerate() {
            let v = (mask >> b & 1) as f64;
            if v < p.lp.lower[j] || v > p.lp.upper[j] {
                in_range = false;
            }
            work.lower[j] = v;
            work.upper[j] = v;
        }
        if !in_range {
            continue;
        }
        let r = solve_lp(&work);
        if r.status != LpStatus::Optimal {
            continue;
        }
        let value = orient * r.objective;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, r.primal));
        }
    }
    Ok(match best {
        Some((v, x)) => MilpSolution {
            status: MilpStatus::Optimal,
            primal: x,
            objective: orient * v,
            bound: orient * v,
            gap: 0.0,
            nodes_explored: total,
        },
        None => MilpSolution {
            status: MilpStatus::Infeasible,
            primal: Vec::new(),
            objective: f64::NAN,
            bound: f64::NAN,
            gap: f64::INFINITY,
            nodes_explored: total,
        },
    })
}
