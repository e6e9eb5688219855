//! Partition-function estimation by Rao-Blackwellized simulated tempering,
//! with annealing and integration baselines.

pub mod annealing;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod ladder;
pub mod math;
pub mod model;
pub mod rbm;
pub mod rng;
pub mod tempering;
pub mod toy;
pub mod tracker;

pub use error::{Error, Result};
