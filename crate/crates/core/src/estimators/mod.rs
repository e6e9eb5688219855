//! Partition-function estimators built on tempered-sampling statistics.
//!
//! Every estimator returns `log Z_k` for each rung of the ladder, anchored at
//! `log Z_1 = 0`.

use serde::{Deserialize, Serialize};

pub mod mbar;
pub mod mixed;
pub mod rts;
pub mod samples;
pub mod stationary;
pub mod ti;

pub use mbar::{mbar, mbar_gradient, mbar_weighted, MbarSolution};
pub use mixed::mixed_zhat_mle;
pub use rts::{
    harmonic_step, mbar_stochastic, rts, rts_bias_variance, rts_log_z, rts_log_z_from_log_c, ts_counts, BiasVariance,
};
pub use samples::{SampleLog, SampleRecord};
pub use stationary::{stationary_distribution, stationary_estimate, StationaryMode};
pub use ti::{ti, ti_rb, TiRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Rts,
    Ts,
    TiRiemann,
    TiTrap,
    TiRb,
    Mbar,
    MbarStoch,
    MixedMle,
    Sd,
    Rsd,
    Ais,
    Raise,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rts => "RTS",
            Method::Ts => "TS",
            Method::TiRiemann => "TI_RIEMANN",
            Method::TiTrap => "TI_TRAP",
            Method::TiRb => "TI_RB",
            Method::Mbar => "MBAR",
            Method::MbarStoch => "MBAR_STOCH",
            Method::MixedMle => "MIXED_MLE",
            Method::Sd => "SD",
            Method::Rsd => "RSD",
            Method::Ais => "AIS",
            Method::Raise => "RAISE",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-rung log partition estimates with optional diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogZEstimate {
    pub method: Method,
    pub log_z: Vec<f64>,
    pub bias_est: Option<Vec<f64>>,
    pub var_est: Option<Vec<f64>>,
    pub n_samples: u64,
    /// Non-fatal conditions met while estimating (non-convergence, imputed bins).
    pub warnings: Vec<String>,
}

impl LogZEstimate {
    pub fn new(method: Method, log_z: Vec<f64>, n_samples: u64) -> Self {
        LogZEstimate { method, log_z, bias_est: None, var_est: None, n_samples, warnings: Vec::new() }
    }

    /// `log Z_K`, the target's log partition function.
    pub fn log_z_target(&self) -> f64 {
        *self.log_z.last().expect("non-empty estimate")
    }

    pub fn k(&self) -> usize {
        self.log_z.len()
    }
}
