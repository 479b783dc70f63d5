//! Linear programming: problem description, bounded revised simplex, and
//! optimality certificates.

mod lu;
mod problem;
mod scaling;
mod simplex;

pub use problem::{
    certify, Basis, Certificate, LpProblem, LpResult, LpRow, LpStatus, ObjSense, RowSense,
    VarStatus,
};
pub use simplex::{solve_lp, solve_lp_warm, solve_with, LpOptions, TOL_CS, TOL_DUAL, TOL_FEAS, TOL_GAP};
