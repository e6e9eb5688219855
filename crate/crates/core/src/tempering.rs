//! Simulated-tempering chains and their Rao-Blackwellized statistics.
//!
//! One sweep is one model transition at the chain's current inverse
//! temperature followed by a fresh draw of the temperature index from
//! `q(β | x)`. The full conditional vector is folded into `c_hat`, which is
//! what makes the partition estimates cheap and low-variance.

use std::io::Write;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::rts::rts_log_z_from_log_c;
use crate::estimators::samples::{SampleLog, SampleRecord};
use crate::ladder::{beta_conditional_into, sample_index, TemperatureLadder};
use crate::model::TemperedModel;
use crate::rng::{chain_rng, ChainRng};

/// Sufficient statistics accumulated along tempered chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaoBlackwellStats {
    /// Running mean of `q(β_k | x)`.
    pub c_hat: Vec<f64>,
    /// Visits per bin of the sampled index.
    pub raw_counts: Vec<u64>,
    /// Running sum of `q(β_k | x) Δ_x`.
    pub delta_weighted: Vec<f64>,
    /// Sum of `Δ_x` over samples whose sampled index is `k`.
    pub delta_bin_sum: Vec<f64>,
    /// Row-major K×K counts of sampled moves `j → k`.
    pub transition_counts: Vec<u64>,
    /// Row-major K×K sums of `q(β_k | x)` over samples that left bin `j`.
    pub rb_transitions: Vec<f64>,
    pub n_samples: u64,
}

impl RaoBlackwellStats {
    pub fn new(k: usize) -> Self {
        RaoBlackwellStats {
            c_hat: vec![0.0; k],
            raw_counts: vec![0; k],
            delta_weighted: vec![0.0; k],
            delta_bin_sum: vec![0.0; k],
            transition_counts: vec![0; k * k],
            rb_transitions: vec![0.0; k * k],
            n_samples: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.c_hat.len()
    }

    /// Fold in one sample: the state left bin `prev`, has energy difference
    /// `delta`, conditional `cond`, and was assigned bin `next`.
    pub fn record(&mut self, prev: usize, delta: f64, cond: &[f64], next: usize) {
        let k = self.k();
        self.n_samples += 1;
        let inv = 1.0 / self.n_samples as f64;
        let row = &mut self.rb_transitions[prev * k..(prev + 1) * k];
        for j in 0..k {
            let q = cond[j];
            self.c_hat[j] += (q - self.c_hat[j]) * inv;
            self.delta_weighted[j] += q * delta;
            row[j] += q;
        }
        self.raw_counts[next] += 1;
        self.delta_bin_sum[next] += delta;
        self.transition_counts[prev * k + next] += 1;
    }

    /// Fold in only the Rao-Blackwellized part of a sample.
    pub fn record_weights(&mut self, delta: f64, cond: &[f64]) {
        self.n_samples += 1;
        let inv = 1.0 / self.n_samples as f64;
        for (j, &q) in cond.iter().enumerate() {
            self.c_hat[j] += (q - self.c_hat[j]) * inv;
            self.delta_weighted[j] += q * delta;
        }
    }

    /// Sample-count-weighted merge.
    pub fn merge(&mut self, other: &RaoBlackwellStats) {
        assert_eq!(self.k(), other.k(), "merging stats of different ladders");
        let n = self.n_samples + other.n_samples;
        if n == 0 {
            return;
        }
        let w = other.n_samples as f64 / n as f64;
        for (a, b) in self.c_hat.iter_mut().zip(&other.c_hat) {
            *a += (b - *a) * w;
        }
        for (a, b) in self.raw_counts.iter_mut().zip(&other.raw_counts) {
            *a += b;
        }
        for (a, b) in self.delta_weighted.iter_mut().zip(&other.delta_weighted) {
            *a += b;
        }
        for (a, b) in self.delta_bin_sum.iter_mut().zip(&other.delta_bin_sum) {
            *a += b;
        }
        for (a, b) in self.transition_counts.iter_mut().zip(&other.transition_counts) {
            *a += b;
        }
        for (a, b) in self.rb_transitions.iter_mut().zip(&other.rb_transitions) {
            *a += b;
        }
        self.n_samples = n;
    }

    pub fn merged<'a, I: IntoIterator<Item = &'a RaoBlackwellStats>>(k: usize, parts: I) -> Self {
        let mut acc = RaoBlackwellStats::new(k);
        for p in parts {
            acc.merge(p);
        }
        acc
    }

    /// `max_k |r_k − ĉ_k|`.
    pub fn max_prior_gap(&self, ladder: &TemperatureLadder) -> f64 {
        ladder
            .prior()
            .iter()
            .zip(&self.c_hat)
            .map(|(r, c)| (r - c).abs())
            .fold(0.0, f64::max)
    }
}

/// One simulated-tempering chain.
#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub x: S,
    pub beta_index: usize,
    /// Stream id of this chain's generator under the run seed.
    pub chain_id: u64,
    rng: ChainRng,
    cond: Vec<f64>,
}

impl<S> ChainState<S> {
    pub fn new(x: S, beta_index: usize, k: usize, seed: u64, chain_id: u64) -> Self {
        ChainState { x, beta_index, chain_id, rng: chain_rng(seed, chain_id), cond: vec![0.0; k] }
    }

    pub fn rng(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    /// Conditional computed by the most recent sweep.
    pub fn last_conditional(&self) -> &[f64] {
        &self.cond
    }
}

/// Transition `x` at the current temperature, then redraw the temperature
/// index from `q(β | x)` and fold the sample into `stats`. Returns `Δ_x`.
pub fn gibbs_sweep<M: TemperedModel>(
    model: &M,
    ladder: &TemperatureLadder,
    state: &mut ChainState<M::State>,
    stats: &mut RaoBlackwellStats,
) -> f64 {
    let prev = state.beta_index;
    model.transition(&mut state.x, ladder.beta(prev), &mut state.rng);
    let delta = model.delta(&state.x);
    if state.cond.len() != ladder.len() {
        state.cond.resize(ladder.len(), 0.0);
    }
    beta_conditional_into(ladder, delta, &mut state.cond);
    let next = sample_index(&state.cond, &mut state.rng);
    stats.record(prev, delta, &state.cond, next);
    state.beta_index = next;
    delta
}

/// Output of running a pool of chains for a fixed number of sweeps.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub pooled: RaoBlackwellStats,
    pub per_chain: Vec<RaoBlackwellStats>,
    /// Per-sample log, chain-major, when requested.
    pub samples: Option<SampleLog>,
}

/// A set of independent chains with per-chain random streams.
#[derive(Debug, Clone)]
pub struct ChainPool<S> {
    chains: Vec<ChainState<S>>,
}

impl<S: Clone + Send + Sync> ChainPool<S> {
    /// Fresh chains: `x ~ p1`, temperature index uniform.
    pub fn new<M: TemperedModel<State = S>>(model: &M, k: usize, n_chains: usize, seed: u64) -> Self {
        assert!(n_chains >= 1, "need at least one chain");
        let chains = (0..n_chains as u64)
            .map(|id| {
                let mut rng = chain_rng(seed, id);
                let x = model.sample_p1(&mut rng);
                let beta_index = rng.random_range(0..k);
                ChainState { x, beta_index, chain_id: id, rng, cond: vec![0.0; k] }
            })
            .collect();
        ChainPool { chains }
    }

    /// Chains started from given states, temperature index uniform.
    pub fn from_states(states: Vec<S>, k: usize, seed: u64) -> Self {
        let chains = states
            .into_iter()
            .enumerate()
            .map(|(id, x)| {
                let mut rng = chain_rng(seed, id as u64);
                let beta_index = rng.random_range(0..k);
                ChainState { x, beta_index, chain_id: id as u64, rng, cond: vec![0.0; k] }
            })
            .collect();
        ChainPool { chains }
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn chains(&self) -> &[ChainState<S>] {
        &self.chains
    }

    pub fn chains_mut(&mut self) -> &mut [ChainState<S>] {
        &mut self.chains
    }

    /// Keep each chain's state, redraw its temperature index uniformly on a
    /// ladder of `k` rungs.
    pub fn restart_betas(&mut self, k: usize) {
        for c in &mut self.chains {
            c.beta_index = c.rng.random_range(0..k);
            c.cond.resize(k, 0.0);
        }
    }

    /// Run `n_sweeps` sweeps on every chain with fresh statistics.
    pub fn run<M: TemperedModel<State = S>>(
        &mut self,
        model: &M,
        ladder: &TemperatureLadder,
        n_sweeps: usize,
        keep_samples: bool,
    ) -> RunOutput {
        let k = ladder.len();
        let results: Vec<(RaoBlackwellStats, Vec<SampleRecord>)> = self
            .chains
            .par_iter_mut()
            .map(|chain| {
                let mut stats = RaoBlackwellStats::new(k);
                let mut recs = Vec::with_capacity(if keep_samples { n_sweeps } else { 0 });
                for _ in 0..n_sweeps {
                    let delta = gibbs_sweep(model, ladder, chain, &mut stats);
                    if keep_samples {
                        recs.push(SampleRecord::new(delta, chain.beta_index));
                    }
                }
                (stats, recs)
            })
            .collect();
        let mut pooled = RaoBlackwellStats::new(k);
        let mut per_chain = Vec::with_capacity(results.len());
        let mut records = Vec::new();
        for (stats, recs) in results {
            pooled.merge(&stats);
            per_chain.push(stats);
            records.extend(recs);
        }
        let samples = keep_samples.then(|| SampleLog::from_records(records));
        RunOutput { pooled, per_chain, samples }
    }
}

/// Start `n_chains` fresh chains and run them for `n_sweeps` sweeps.
pub fn run_chains<M: TemperedModel>(
    model: &M,
    ladder: &TemperatureLadder,
    n_chains: usize,
    n_sweeps: usize,
    seed: u64,
) -> (RunOutput, ChainPool<M::State>) {
    let mut pool = ChainPool::new(model, ladder.len(), n_chains, seed);
    let out = pool.run(model, ladder, n_sweeps, false);
    (out, pool)
}

/// Settings for the Ẑ initialization iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub max_iters: usize,
    pub sweeps_per_iter: usize,
    /// Stop when `max_k |r_k − ĉ_k|` falls below this; `None` means `0.1 / K`.
    pub threshold: Option<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { max_iters: 10, sweeps_per_iter: 50, threshold: None }
    }
}

/// One initialization iteration, as seen before its Ẑ update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitIteration {
    pub log_zhat: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub raw_counts: Vec<u64>,
    pub max_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitReport {
    pub iterations_used: usize,
    /// `max_k |r_k − ĉ_k|` of the last iteration.
    pub max_abs_gap: f64,
    /// `log Ẑ` after each iteration's update.
    pub zhat_trajectory: Vec<Vec<f64>>,
    pub iterations: Vec<InitIteration>,
    pub converged: bool,
    pub threshold: f64,
    /// Set when some ĉ_k underflowed to zero in linear space; the update is
    /// computed from log-domain weights regardless.
    pub underflow: bool,
}

/// Alternate short tempered runs with RTS updates of `log Ẑ` until the
/// temperature marginal matches the prior.
///
/// Each pass keeps the chains' states and redraws their temperature indices
/// uniformly. Non-convergence is reported, not treated as an error.
pub fn init_iterations<M: TemperedModel>(
    model: &M,
    ladder: &mut TemperatureLadder,
    pool: &mut ChainPool<M::State>,
    cfg: &InitConfig,
) -> InitReport {
    let k = ladder.len();
    let threshold = cfg.threshold.unwrap_or(0.1 / k as f64);
    assert!(threshold > 0.0, "threshold must be positive");
    let mut report = InitReport {
        iterations_used: 0,
        max_abs_gap: f64::INFINITY,
        zhat_trajectory: Vec::new(),
        iterations: Vec::new(),
        converged: false,
        threshold,
        underflow: false,
    };
    for _ in 0..cfg.max_iters {
        pool.restart_betas(k);
        let out = pool.run(model, ladder, cfg.sweeps_per_iter, true);
        let gap = out.pooled.max_prior_gap(ladder);
        report.iterations.push(InitIteration {
            log_zhat: ladder.log_zhat().to_vec(),
            c_hat: out.pooled.c_hat.clone(),
            raw_counts: out.pooled.raw_counts.clone(),
            max_gap: gap,
        });
        report.iterations_used += 1;
        report.max_abs_gap = gap;
        report.underflow |= out.pooled.c_hat.iter().any(|&c| c <= 0.0);

        let log_c = out.samples.as_ref().expect("samples kept").log_c_hat(ladder);
        let lz = rts_log_z_from_log_c(ladder, &log_c);
        ladder.set_log_zhat(lz).expect("finite RTS update");
        report.zhat_trajectory.push(ladder.log_zhat().to_vec());
        if gap < threshold {
            report.converged = true;
            break;
        }
    }
    report
}

/// Row-normalized β transition matrix with unvisited rows flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub rows: Vec<Vec<f64>>,
    /// Rows with no outgoing moves, emitted as uniform.
    pub unvisited: Vec<usize>,
}

pub fn empirical_transition_matrix(stats: &RaoBlackwellStats) -> TransitionMatrix {
    let k = stats.k();
    let mut rows = Vec::with_capacity(k);
    let mut unvisited = Vec::new();
    for j in 0..k {
        let row = &stats.transition_counts[j * k..(j + 1) * k];
        let total: u64 = row.iter().sum();
        if total == 0 {
            unvisited.push(j);
            rows.push(vec![1.0 / k as f64; k]);
        } else {
            rows.push(row.iter().map(|&c| c as f64 / total as f64).collect());
        }
    }
    if !unvisited.is_empty() {
        warn!("transition matrix: {} unvisited rows", unvisited.len());
    }
    TransitionMatrix { rows, unvisited }
}

/// `k,beta,r,c_hat,raw_count,log_zhat`
pub fn write_stats_csv<W: Write>(out: W, ladder: &TemperatureLadder, stats: &RaoBlackwellStats) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "beta", "r", "c_hat", "raw_count", "log_zhat"])?;
    let r = ladder.prior();
    for k in 0..ladder.len() {
        w.write_record(&[
            k.to_string(),
            ladder.beta(k).to_string(),
            r[k].to_string(),
            stats.c_hat[k].to_string(),
            stats.raw_counts[k].to_string(),
            ladder.log_zhat()[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,k,beta,r,c_hat,raw_count,log_zhat` for every initialization pass.
pub fn write_init_csv<W: Write>(out: W, ladder: &TemperatureLadder, report: &InitReport) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "k", "beta", "r", "c_hat", "raw_count", "log_zhat"])?;
    let r = ladder.prior();
    for (i, it) in report.iterations.iter().enumerate() {
        for k in 0..ladder.len() {
            w.write_record(&[
                i.to_string(),
                k.to_string(),
                ladder.beta(k).to_string(),
                r[k].to_string(),
                it.c_hat[k].to_string(),
                it.raw_counts[k].to_string(),
                it.log_zhat[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Square matrix rows as CSV, no header.
pub fn write_matrix_csv<W: Write>(out: W, rows: &[Vec<f64>]) -> crate::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
