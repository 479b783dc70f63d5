use thiserror::Error;

use crate::scenario::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scenario has {} violation(s): {}", .0.len(), join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no row tagged {0}")]
    RowNotFound(String),
    #[error("binary fixing: {0}")]
    FixBinaries(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("price re-solve objective {lp} differs from MILP objective {milp}")]
    ObjectiveMismatch { lp: f64, milp: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] dso_milp::ModelError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    /// Short machine-readable category used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Invalid(_) => "validation",
            Error::InvalidArgument(_) => "argument",
            Error::RowNotFound(_) => "row_not_found",
            Error::FixBinaries(_) => "fix_binaries",
            Error::Solver(_) => "solver",
            Error::ObjectiveMismatch { .. } => "objective_mismatch",
            Error::Dimension(_) => "dimension",
            Error::Model(_) => "model",
        }
    }
}
