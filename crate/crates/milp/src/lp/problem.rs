use serde::{Deserialize, Serialize};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl RowSense {
    pub fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LpRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A linear program over columns with explicit bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: ObjSense,
    pub objective: Vec<f64>,
    /// Constant added to every reported objective value.
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LpProblem {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            offset: 0.0,
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_column(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(LpRow { coefs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_cols();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(ModelError::Dimension(format!(
                "{} objective entries, {} lower bounds, {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ModelError::Bounds { column: j, lower: l, upper: u });
            }
            if !self.objective[j].is_finite() {
                return Err(ModelError::NonFinite(format!("objective coefficient of column {j}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(ModelError::NonFinite(format!("rhs of row {i}")));
            }
            for &(j, a) in &row.coefs {
                if j >= n {
                    return Err(ModelError::ColumnIndex { row: i, column: j });
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(format!("coefficient ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Position of a variable relative to the basis. Variables `0..n` are the
/// structural columns, `n..n+m` the row activities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub statuses: Vec<VarStatus>,
}

impl Basis {
    pub fn is_compatible(&self, p: &LpProblem) -> bool {
        self.statuses.len() == p.num_cols() + p.num_rows()
            && self.statuses.iter().filter(|s| **s == VarStatus::Basic).count() == p.num_rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Sensitivity of the objective to each row's right-hand side.
    pub duals: Vec<f64>,
    /// `c_j - sum_i duals_i a_ij` for every column.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

impl LpResult {
    pub(crate) fn failed(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            basis: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Worst-case residuals of an optimal result against its problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Certificate {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub complementary_slackness: f64,
}

/// Recomputes feasibility, duality and complementary slackness residuals of
/// `result` from scratch.
///
/// Dual signs follow the maximization convention: duals of `<=` rows are
/// nonnegative and duals of `>=` rows nonpositive (mirrored when minimizing).
/// Each column is measured against its nearest finite bound: under
/// maximization a column at its lower bound needs a nonpositive reduced cost,
/// one at its upper bound a nonnegative one.
pub fn certify(p: &LpProblem, result: &LpResult) -> Certificate {
    let x = &result.primal;
    let y = &result.duals;
    let d = &result.reduced_costs;
    let sign = match p.sense {
        ObjSense::Maximize => 1.0,
        ObjSense::Minimize => -1.0,
    };
    let mut cert = Certificate::default();

    for (j, &v) in x.iter().enumerate() {
        let infeas = (p.lower[j] - v).max(v - p.upper[j]).max(0.0);
        cert.primal_infeasibility = cert.primal_infeasibility.max(infeas);
    }
    let mut dual_obj = p.offset;
    for (i, row) in p.rows.iter().enumerate() {
        cert.primal_infeasibility = cert.primal_infeasibility.max(row.violation(x));
        let yi = sign * y[i];
        let wrong = match row.sense {
            RowSense::Le => (-yi).max(0.0),
            RowSense::Ge => yi.max(0.0),
            RowSense::Eq => 0.0,
        };
        cert.dual_infeasibility = cert.dual_infeasibility.max(wrong);
        let slack = row.activity(x) - row.rhs;
        cert.complementary_slackness = cert.complementary_slackness.max((y[i] * slack).abs());
        dual_obj += y[i] * row.rhs;
    }
    for j in 0..p.num_cols() {
        let dj = sign * d[j];
        let (l, u) = (p.lower[j], p.upper[j]);
        let to_lower = if l.is_finite() { x[j] - l } else { f64::INFINITY };
        let to_upper = if u.is_finite() { u - x[j] } else { f64::INFINITY };
        if to_lower.is_infinite() && to_upper.is_infinite() {
            cert.dual_infeasibility = cert.dual_infeasibility.max(dj.abs());
            dual_obj += d[j] * x[j];
            continue;
        }
        let (bound, wrong) = if to_lower <= to_upper {
            (l, if l == u { 0.0 } else { dj.max(0.0) })
        } else {
            (u, (-dj).max(0.0))
        };
        cert.dual_infeasibility = cert.dual_infeasibility.max(wrong);
        cert.complementary_slackness =
            cert.complementary_slackness.max((d[j] * (x[j] - bound)).abs());
        dual_obj += d[j] * bound;
    }
    cert.dual_objective = dual_obj;
    cert.duality_gap = (result.objective - dual_obj).abs();
    cert
}
