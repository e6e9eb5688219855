//! The inverse-temperature ladder and the conditional/marginal laws of the
//! tempering variable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// How the interior inverse temperatures are placed between 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Spacing {
    Uniform,
    /// `0, b_min, ..., 1` with geometric spacing above `b_min`.
    Geometric { min_beta: f64 },
}

/// Prior mass over the ladder rungs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Uniform,
    /// `r_k ∝ exp(lambda * beta_k)`.
    Exponential { lambda: f64 },
}

/// Inverse temperatures `0 = β_1 < ... < β_K = 1`, log prior masses and the
/// running log partition estimates `log Ẑ_k` that define the tempered joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureLadder {
    betas: Vec<f64>,
    log_r: Vec<f64>,
    log_zhat: Vec<f64>,
}

impl TemperatureLadder {
    pub fn new(betas: Vec<f64>, log_r: Vec<f64>, log_zhat: Vec<f64>) -> Result<Self> {
        let k = betas.len();
        if k < 2 {
            return Err(Error::InvalidLadder(format!("K ≥ 2 required, got {k}")));
        }
        if log_r.len() != k || log_zhat.len() != k {
            return Err(Error::InvalidLadder(format!(
                "length mismatch: {} betas, {} priors, {} log Ẑ",
                k,
                log_r.len(),
                log_zhat.len()
            )));
        }
        if betas[0] != 0.0 || betas[k - 1] != 1.0 {
            return Err(Error::InvalidLadder("betas must start at 0 and end at 1".into()));
        }
        if betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidLadder("betas must be strictly increasing".into()));
        }
        if log_r.iter().chain(log_zhat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLadder("non-finite prior or log Ẑ".into()));
        }
        let total: f64 = log_r.iter().map(|l| l.exp()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLadder(format!("prior sums to {total}, not 1")));
        }
        let mut ladder = TemperatureLadder { betas, log_r, log_zhat };
        ladder.anchor();
        Ok(ladder)
    }

    /// Ladder with the given spacing and prior, `log Ẑ = 0`.
    pub fn build(k: usize, spacing: Spacing, prior: Prior) -> Result<Self> {
        let betas = make_betas(k, spacing)?;
        let log_r = make_log_prior(&betas, prior);
        Self::new(betas, log_r, vec![0.0; k])
    }

    /// Uniform spacing, uniform prior, `log Ẑ = 0`.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::build(k, Spacing::Uniform, Prior::Uniform)
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k]
    }

    pub fn log_r(&self) -> &[f64] {
        &self.log_r
    }

    pub fn prior(&self) -> Vec<f64> {
        self.log_r.iter().map(|l| l.exp()).collect()
    }

    pub fn log_zhat(&self) -> &[f64] {
        &self.log_zhat
    }

    /// Replace the running estimates. The vector is re-anchored so that
    /// `log_zhat[0] = 0`.
    pub fn set_log_zhat(&mut self, log_zhat: Vec<f64>) -> Result<()> {
        if log_zhat.len() != self.len() {
            return Err(Error::InvalidLadder(format!(
                "expected {} log Ẑ entries, got {}",
                self.len(),
                log_zhat.len()
            )));
        }
        if log_zhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLadder("non-finite log Ẑ".into()));
        }
        self.log_zhat = log_zhat;
        self.anchor();
        Ok(())
    }

    fn anchor(&mut self) {
        let z0 = self.log_zhat[0];
        if z0 != 0.0 {
            for z in &mut self.log_zhat {
                *z -= z0;
            }
        }
    }

    /// Same betas and prior with `log Ẑ = 0`.
    pub fn with_zero_zhat(&self) -> Self {
        TemperatureLadder {
            betas: self.betas.clone(),
            log_r: self.log_r.clone(),
            log_zhat: vec![0.0; self.len()],
        }
    }

    /// A ladder on new betas whose `log Ẑ` is linearly interpolated from this one.
    pub fn regrid(&self, k: usize, spacing: Spacing, prior: Prior) -> Result<Self> {
        let betas = make_betas(k, spacing)?;
        let log_zhat = betas.iter().map(|&b| interp(&self.betas, &self.log_zhat, b)).collect();
        let log_r = make_log_prior(&betas, prior);
        Self::new(betas, log_r, log_zhat)
    }
}

fn make_betas(k: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidLadder(format!("K ≥ 2 required, got {k}")));
    }
    let mut betas: Vec<f64> = match spacing {
        Spacing::Uniform => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
        Spacing::Geometric { min_beta } => {
            if !(min_beta > 0.0 && min_beta < 1.0) || k < 3 {
                return Err(Error::InvalidLadder(
                    "geometric spacing needs 0 < min_beta < 1 and K ≥ 3".into(),
                ));
            }
            let mut b = vec![0.0];
            let steps = (k - 2) as f64;
            for i in 0..k - 1 {
                b.push(min_beta * (1.0 / min_beta).powf(i as f64 / steps));
            }
            b
        }
    };
    betas[k - 1] = 1.0;
    Ok(betas)
}

fn make_log_prior(betas: &[f64], prior: Prior) -> Vec<f64> {
    let raw: Vec<f64> = match prior {
        Prior::Uniform => vec![0.0; betas.len()],
        Prior::Exponential { lambda } => betas.iter().map(|b| lambda * b).collect(),
    };
    let norm = log_sum_exp(&raw);
    raw.into_iter().map(|v| v - norm).collect()
}

pub(crate) fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.iter().position(|&v| v >= x) {
        None => ys[ys.len() - 1],
        Some(0) => ys[0],
        Some(i) => {
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + t * (ys[i] - ys[i - 1])
        }
    }
}

/// The conditional law `q(β_k | x)` of the tempering index given a state.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaConditional {
    pub probs: Vec<f64>,
}

impl BetaConditional {
    /// Draw an index by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng)
    }
}

/// Inverse-CDF draw from a normalized probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding slack above the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Unnormalized log weights `β_k Δ + log r_k − log Ẑ_k`.
pub fn beta_logits(ladder: &TemperatureLadder, delta_x: f64, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = ladder.betas[k] * delta_x + ladder.log_r[k] - (ladder.log_zhat[k] - ladder.log_zhat[0]);
    }
}

/// Writes `q(β_k | x)` for energy difference `delta_x` into `out`.
pub fn beta_conditional_into(ladder: &TemperatureLadder, delta_x: f64, out: &mut [f64]) {
    beta_logits(ladder, delta_x, out);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

pub fn beta_conditional(ladder: &TemperatureLadder, delta_x: f64) -> BetaConditional {
    let mut probs = vec![0.0; ladder.len()];
    beta_conditional_into(ladder, delta_x, &mut probs);
    BetaConditional { probs }
}

/// Marginal `q(β_k) ∝ r_k Z_k / Ẑ_k` for known true log partition values.
pub fn marginal_q_beta(ladder: &TemperatureLadder, true_log_z: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = (0..ladder.len())
        .map(|k| ladder.log_r[k] + true_log_z[k] - ladder.log_zhat[k])
        .collect();
    let norm = log_sum_exp(&logits);
    logits.into_iter().map(|l| (l - norm).exp()).collect()
}
