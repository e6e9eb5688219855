use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{beta_conditional_into, beta_logits, TemperatureLadder};
use crate::math::log_sum_exp;
use crate::tempering::RaoBlackwellStats;

/// One stored tempered sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub delta: f64,
    pub beta_index: u32,
    /// `q(β | x)` under the ladder in force when the sample was drawn.
    pub conditional: Option<Vec<f64>>,
    /// Index into [`SampleLog::snapshots`] of that ladder's `log Ẑ`.
    pub zhat_version: Option<u32>,
}

impl SampleRecord {
    pub fn new(delta: f64, beta_index: usize) -> Self {
        SampleRecord { delta, beta_index: beta_index as u32, conditional: None, zhat_version: None }
    }
}

/// Stored per-sample energy differences and bin assignments, plus the
/// `log Ẑ` snapshots referenced by mixed-Ẑ records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleLog {
    pub records: Vec<SampleRecord>,
    pub snapshots: Vec<Vec<f64>>,
}

impl SampleLog {
    pub fn from_records(records: Vec<SampleRecord>) -> Self {
        SampleLog { records, snapshots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    /// Visits per bin.
    pub fn counts(&self, k: usize) -> Result<Vec<u64>> {
        let mut n = vec![0u64; k];
        for r in &self.records {
            let i = r.beta_index as usize;
            if i >= k {
                return Err(Error::InvalidArgument(format!("beta index {i} out of range for K={k}")));
            }
            n[i] += 1;
        }
        Ok(n)
    }

    /// Register a `log Ẑ` snapshot and return its version number.
    pub fn push_snapshot(&mut self, log_zhat: Vec<f64>) -> u32 {
        self.snapshots.push(log_zhat);
        (self.snapshots.len() - 1) as u32
    }

    /// Statistics recomputed from the log under the ladder that produced it.
    /// Moves are counted along record order.
    pub fn stats(&self, ladder: &TemperatureLadder) -> Result<RaoBlackwellStats> {
        let k = ladder.len();
        let mut stats = RaoBlackwellStats::new(k);
        let mut cond = vec![0.0; k];
        let mut prev = None;
        for r in &self.records {
            let next = r.beta_index as usize;
            if next >= k {
                return Err(Error::InvalidArgument(format!("beta index {next} out of range for K={k}")));
            }
            beta_conditional_into(ladder, r.delta, &mut cond);
            stats.record(prev.unwrap_or(next), r.delta, &cond, next);
            prev = Some(next);
        }
        Ok(stats)
    }

    /// Rao-Blackwellized statistics of the logged states under an arbitrary
    /// ladder. Only `c_hat`, `delta_weighted` and `n_samples` are filled: bin
    /// assignments do not carry over to a different ladder.
    pub fn reweighted_stats(&self, ladder: &TemperatureLadder) -> RaoBlackwellStats {
        let k = ladder.len();
        let mut stats = RaoBlackwellStats::new(k);
        let mut cond = vec![0.0; k];
        for r in &self.records {
            beta_conditional_into(ladder, r.delta, &mut cond);
            stats.record_weights(r.delta, &cond);
        }
        stats
    }

    /// `log ĉ_k` accumulated in log space under `ladder`, finite even where
    /// the linear mean underflows.
    pub fn log_c_hat(&self, ladder: &TemperatureLadder) -> Vec<f64> {
        let k = ladder.len();
        let mut logits = vec![0.0; k];
        let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(self.records.len()); k];
        for r in &self.records {
            beta_logits(ladder, r.delta, &mut logits);
            let lse = log_sum_exp(&logits);
            for (b, l) in per_bin.iter_mut().zip(&logits) {
                b.push(l - lse);
            }
        }
        let log_n = (self.records.len() as f64).ln();
        per_bin.iter().map(|b| log_sum_exp(b) - log_n).collect()
    }

    /// Resample `n` records with replacement.
    pub fn bootstrap<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SampleLog {
        let records = (0..n).map(|_| self.records[rng.random_range(0..self.records.len())].clone()).collect();
        SampleLog { records, snapshots: self.snapshots.clone() }
    }

    /// Keep every `every`-th record.
    pub fn thin(&self, every: usize) -> SampleLog {
        let every = every.max(1);
        SampleLog {
            records: self.records.iter().step_by(every).cloned().collect(),
            snapshots: self.snapshots.clone(),
        }
    }
}
