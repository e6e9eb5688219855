//! Occupancy estimates from the stationary law of the empirical β-chain.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::rts::rts_log_z;
use crate::estimators::{LogZEstimate, Method};
use crate::ladder::TemperatureLadder;
use crate::tempering::RaoBlackwellStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StationaryMode {
    /// Rows from sampled index moves.
    Sd,
    /// Rows from summed conditionals of the states that left each bin.
    Rsd,
}

fn reachable(k: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; k];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for j in 0..k {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Stationary distribution of a row-stochastic (or merely non-negative,
/// row-normalized here) K×K matrix given row-major.
///
/// Fails with [`Error::Reducible`] listing the states that do not
/// communicate with state 0.
pub fn stationary_distribution(matrix: &[f64], k: usize) -> Result<Vec<f64>> {
    if matrix.len() != k * k || k == 0 {
        return Err(Error::InvalidArgument("matrix is not K×K".into()));
    }
    let mut p = matrix.to_vec();
    for i in 0..k {
        let s: f64 = p[i * k..(i + 1) * k].iter().sum();
        if s > 0.0 {
            p[i * k..(i + 1) * k].iter_mut().for_each(|v| *v /= s);
        }
    }
    let fwd = reachable(k, |i, j| p[i * k + j] > 0.0);
    let bwd = reachable(k, |i, j| p[j * k + i] > 0.0);
    let bad: Vec<usize> = (0..k).filter(|&i| !(fwd[i] && bwd[i])).collect();
    if !bad.is_empty() {
        return Err(Error::Reducible(bad));
    }

    // Grassmann-Taksar-Heyman state reduction: subtraction-free, so accurate
    // even for nearly decoupled rungs.
    let mut a = p.clone();
    for n in (1..k).rev() {
        let s: f64 = (0..n).map(|j| a[n * k + j]).sum();
        for i in 0..n {
            a[i * k + n] /= s;
        }
        for i in 0..n {
            let ain = a[i * k + n];
            if ain != 0.0 {
                for j in 0..n {
                    a[i * k + j] += ain * a[n * k + j];
                }
            }
        }
    }
    let mut pi = vec![0.0; k];
    pi[0] = 1.0;
    for n in 1..k {
        pi[n] = (0..n).map(|i| pi[i] * a[i * k + n]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);

    // polish with lazy power steps if the residual is not yet at 1e-12
    for _ in 0..1000 {
        let next: Vec<f64> = (0..k).map(|j| (0..k).map(|i| pi[i] * p[i * k + j]).sum()).collect();
        let resid = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if resid < 1e-12 {
            break;
        }
        pi = pi.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let t: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= t);
    }
    Ok(pi)
}

/// RTS ratio with the stationary occupancy of the empirical β-chain in
/// place of `ĉ`.
pub fn stationary_estimate(ladder: &TemperatureLadder, stats: &RaoBlackwellStats, mode: StationaryMode) -> Result<LogZEstimate> {
    let k = ladder.len();
    let matrix: Vec<f64> = match mode {
        StationaryMode::Sd => stats.transition_counts.iter().map(|&c| c as f64).collect(),
        StationaryMode::Rsd => stats.rb_transitions.clone(),
    };
    let pi = stationary_distribution(&matrix, k)?;
    let log_z = rts_log_z(ladder, &pi)?;
    let method = match mode {
        StationaryMode::Sd => Method::Sd,
        StationaryMode::Rsd => Method::Rsd,
    };
    Ok(LogZEstimate::new(method, log_z, stats.n_samples))
}
