//! Day-ahead distribution market auction: scenario data, the welfare MILP,
//! nodal price extraction and settlement.

pub mod error;
pub mod experiment;
pub mod model;
pub mod pricing;
pub mod scenario;

pub use error::Error;
