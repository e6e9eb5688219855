//! Command-line front end for the tempered partition-function estimators.

pub mod config;
pub mod estimate;
pub mod model;
pub mod sweep;
pub mod train;
