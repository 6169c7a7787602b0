//! Exact finite-size partition functions, sector decompositions and
//! central-charge extraction for the perturbed two-dimensional Ising model.

pub mod charge;
pub mod config;
pub mod error;
pub mod exact;
pub mod lattice;
pub mod lognum;
pub mod oracle;
pub mod pfaffian;
pub mod report;
pub mod rg;
pub mod strings;
pub mod strip;
pub mod suites;

pub use error::{Error, Result};
pub use lognum::LogNumber;
