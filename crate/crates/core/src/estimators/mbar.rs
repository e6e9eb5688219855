//! Multistate reweighting of pooled tempered samples.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{LogZEstimate, Method, SampleLog};
use crate::ladder::TemperatureLadder;
use crate::math::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub struct MbarSolution {
    pub log_z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `log D_i = log Σ_j w_j exp(β_j Δ_i − f_j)` for every sample.
fn log_denominators(deltas: &[f64], betas: &[f64], log_w: &[f64], f: &[f64]) -> Vec<f64> {
    deltas
        .par_iter()
        .map_init(
            || vec![0.0; betas.len()],
            |buf, &d| {
                for j in 0..betas.len() {
                    buf[j] = log_w[j] + betas[j] * d - f[j];
                }
                log_sum_exp(buf)
            },
        )
        .collect()
}

/// `log Σ_i exp(β_k Δ_i − log D_i)` for every rung.
fn log_numerators(deltas: &[f64], betas: &[f64], log_d: &[f64]) -> Vec<f64> {
    betas
        .par_iter()
        .map(|&b| {
            let terms: Vec<f64> = deltas.iter().zip(log_d).map(|(&d, &ld)| b * d - ld).collect();
            log_sum_exp(&terms)
        })
        .collect()
}

/// Self-consistent solution of the reweighting equations with arbitrary
/// per-rung sample fractions `weights` (normalized internally).
///
/// Iterates `f_k ← log Σ_i exp(β_k Δ_i) / D_i` and re-anchors
/// `f_1 = 0` until the largest change is below `tol`.
pub fn mbar_weighted(deltas: &[f64], betas: &[f64], weights: &[f64], max_iters: usize, tol: f64) -> Result<MbarSolution> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if weights.len() != betas.len() {
        return Err(Error::InvalidArgument("weights and ladder differ in length".into()));
    }
    if !(weights[0] > 0.0) {
        return Err(Error::NoAnchor);
    }
    let total: f64 = weights.iter().sum();
    let log_w: Vec<f64> = weights.iter().map(|w| (w / total).ln()).collect();
    let mut f = vec![0.0; betas.len()];
    for it in 1..=max_iters {
        let log_d = log_denominators(deltas, betas, &log_w, &f);
        let num = log_numerators(deltas, betas, &log_d);
        let anchor = num[0];
        let mut change: f64 = 0.0;
        for k in 0..f.len() {
            let next = num[k] - anchor;
            change = change.max((next - f[k]).abs());
            f[k] = next;
        }
        f[0] = 0.0;
        if change < tol {
            return Ok(MbarSolution { log_z: f, iterations: it, converged: true });
        }
    }
    Ok(MbarSolution { log_z: f, iterations: max_iters, converged: false })
}

/// Gradient of the reweighting likelihood per sample,
/// `(1/N) Σ_i w_k exp(β_k Δ_i − f_k) / D_i − w_k`, i.e. model minus
/// empirical occupancy of each rung.
pub fn mbar_gradient(deltas: &[f64], betas: &[f64], weights: &[f64], log_z: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let log_w: Vec<f64> = weights.iter().map(|w| (w / total).ln()).collect();
    let log_d = log_denominators(deltas, betas, &log_w, log_z);
    let num = log_numerators(deltas, betas, &log_d);
    let log_n = (deltas.len() as f64).ln();
    (0..betas.len())
        .map(|k| {
            let w = weights[k] / total;
            if w == 0.0 {
                0.0
            } else {
                (log_w[k] + num[k] - log_z[k] - log_n).exp() - w
            }
        })
        .collect()
}

/// Reweighting estimate with `n_k` taken from sampled bin visits.
pub fn mbar(samples: &SampleLog, ladder: &TemperatureLadder, max_iters: usize, tol: f64) -> Result<LogZEstimate> {
    let counts = samples.counts(ladder.len())?;
    if counts[0] == 0 {
        return Err(Error::NoAnchor);
    }
    let weights: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let sol = mbar_weighted(&samples.deltas(), ladder.betas(), &weights, max_iters, tol)?;
    let mut est = LogZEstimate::new(Method::Mbar, sol.log_z, samples.len() as u64);
    if !sol.converged {
        est.warnings.push(format!("not converged after {} iterations", sol.iterations));
    }
    Ok(est)
}
