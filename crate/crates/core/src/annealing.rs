//! Annealed importance sampling, forward (AIS) and from the target back
//! to the base (RAISE), with sweep accounting for cost-matched comparisons.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_mean_exp;
use crate::model::TemperedModel;
use crate::rng::{chain_rng, substream_seed, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealRun {
    /// Forward: estimates of `log Z_K / Z_1`. Reverse: of `log Z_1 / Z_K`.
    pub log_weights: Vec<f64>,
    pub direction: Direction,
    pub n_temps: usize,
    pub sweeps_per_temp: usize,
}

impl AnnealRun {
    /// `n_chains × n_temps × sweeps_per_temp`.
    pub fn total_sweeps(&self) -> u64 {
        (self.log_weights.len() * self.n_temps * self.sweeps_per_temp) as u64
    }
}

/// `n` evenly spaced inverse temperatures from 0 to 1.
pub fn uniform_betas(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 }).collect()
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 temperatures, got {}", betas.len())));
    }
    if betas[0] != 0.0 || *betas.last().unwrap() != 1.0 || betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("temperatures must rise strictly from 0 to 1".into()));
    }
    Ok(())
}

/// Forward annealing on the uniform grid with one sweep per temperature.
pub fn ais<M: TemperedModel>(model: &M, n_temps: usize, n_chains: usize, seed: u64) -> Result<AnnealRun> {
    ais_with(model, &uniform_betas(n_temps), n_chains, 1, seed)
}

/// Forward annealing on an explicit grid. Each chain starts at `x ~ p1`; at
/// every step the weight picks up `(β_k − β_{k−1}) Δ_x` before `x` is moved
/// at `β_k`.
pub fn ais_with<M: TemperedModel>(
    model: &M,
    betas: &[f64],
    n_chains: usize,
    sweeps_per_temp: usize,
    seed: u64,
) -> Result<AnnealRun> {
    check_betas(betas)?;
    let stream = substream_seed(seed, Substream::Anneal);
    let log_weights: Vec<f64> = (0..n_chains as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = chain_rng(stream, id);
            let mut x = model.sample_p1(&mut rng);
            let mut lw = 0.0;
            for k in 1..betas.len() {
                lw += (betas[k] - betas[k - 1]) * model.delta(&x);
                for _ in 0..sweeps_per_temp {
                    model.transition(&mut x, betas[k], &mut rng);
                }
            }
            lw
        })
        .collect();
    Ok(AnnealRun { log_weights, direction: Direction::Forward, n_temps: betas.len(), sweeps_per_temp })
}

/// Reverse annealing from target samples down to the base on the uniform
/// grid, one sweep per temperature.
pub fn raise<M: TemperedModel>(
    model: &M,
    n_temps: usize,
    n_chains: usize,
    start_states: Option<&[M::State]>,
    seed: u64,
) -> Result<AnnealRun> {
    raise_with(model, &uniform_betas(n_temps), n_chains, 1, start_states, seed)
}

/// Reverse annealing on an explicit grid. Starting states are taken from
/// `start_states` (cycled) or, failing that, from the model's exact target
/// sampler.
pub fn raise_with<M: TemperedModel>(
    model: &M,
    betas: &[f64],
    n_chains: usize,
    sweeps_per_temp: usize,
    start_states: Option<&[M::State]>,
    seed: u64,
) -> Result<AnnealRun> {
    check_betas(betas)?;
    let stream = substream_seed(seed, Substream::Anneal) ^ 0x5241_4953_45;
    let starts: Vec<M::State> = match start_states {
        Some(s) if !s.is_empty() => (0..n_chains).map(|i| s[i % s.len()].clone()).collect(),
        _ => {
            let mut rng = chain_rng(stream, u64::MAX);
            (0..n_chains)
                .map(|_| model.sample_target(&mut rng))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::InvalidArgument("reverse annealing needs start states".into()))?
        }
    };
    let log_weights: Vec<f64> = starts
        .into_par_iter()
        .enumerate()
        .map(|(id, mut x)| {
            let mut rng = chain_rng(stream, id as u64);
            let mut lw = 0.0;
            for k in (1..betas.len()).rev() {
                lw += (betas[k - 1] - betas[k]) * model.delta(&x);
                if k - 1 > 0 {
                    for _ in 0..sweeps_per_temp {
                        model.transition(&mut x, betas[k - 1], &mut rng);
                    }
                }
            }
            lw
        })
        .collect();
    Ok(AnnealRun { log_weights, direction: Direction::Reverse, n_temps: betas.len(), sweeps_per_temp })
}

/// `(log Ẑ_K, effective sample size)`. Reverse runs report the negated
/// log-mean-exp, an upward-biased estimate of `log Z_K`.
pub fn anneal_aggregate(run: &AnnealRun) -> Result<(f64, f64)> {
    if run.log_weights.is_empty() {
        return Err(Error::InvalidArgument("no weights".into()));
    }
    let lme = log_mean_exp(&run.log_weights);
    let m = run.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (s1, s2) = run.log_weights.iter().fold((0.0, 0.0), |(a, b), lw| {
        let w = (lw - m).exp();
        (a + w, b + w * w)
    });
    let est = match run.direction {
        Direction::Forward => lme,
        Direction::Reverse => -lme,
    };
    Ok((est, s1 * s1 / s2))
}

pub fn write_weights_csv<W: Write>(out: W, run: &AnnealRun) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["chain", "direction", "log_weight"])?;
    let dir = match run.direction {
        Direction::Forward => "forward",
        Direction::Reverse => "reverse",
    };
    for (i, lw) in run.log_weights.iter().enumerate() {
        w.write_record([i.to_string(), dir.to_string(), format!("{lw:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}
