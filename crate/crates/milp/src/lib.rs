//! LP and MILP solving for the auction engine: a bounded revised simplex that
//! reports duals and reduced costs, and a best-bound branch-and-bound on top.

pub mod bb;
pub mod error;
pub mod lp;

pub use error::ModelError;
