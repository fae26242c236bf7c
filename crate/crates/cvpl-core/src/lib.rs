//! Linkage-risk assessment for protected tabular data releases.

pub mod attribution;
pub mod baselines;
pub mod config;
pub mod data;
pub mod eval;
pub mod grid;
pub mod linkage;
pub mod matrix;
pub mod protect;
pub mod report;
pub mod rng;
pub mod sim;
pub mod stats;
