//! The RTS ratio estimator, its count-based (TS) counterpart, the
//! stochastic-approximation update and the delta-method diagnostics.

use crate::error::{Error, Result};
use crate::estimators::{LogZEstimate, Method};
use crate::ladder::TemperatureLadder;
use crate::math::mean_var;
use crate::tempering::RaoBlackwellStats;

/// `log Z_k = log Ẑ_k + log r_1 − log r_k + log ĉ_k − log ĉ_1`, with
/// `log Z_1 = 0`.
pub fn rts_log_z(ladder: &TemperatureLadder, c_hat: &[f64]) -> Result<Vec<f64>> {
    if !(c_hat[0] > 0.0) {
        return Err(Error::BaseNeverWeighted);
    }
    let empty: Vec<usize> = (1..c_hat.len()).filter(|&k| !(c_hat[k] > 0.0)).collect();
    if !empty.is_empty() {
        return Err(Error::EmptyBins(empty));
    }
    let lr = ladder.log_r();
    let lz = ladder.log_zhat();
    let lc1 = c_hat[0].ln();
    let mut out = Vec::with_capacity(c_hat.len());
    out.push(0.0);
    for k in 1..c_hat.len() {
        out.push(lz[k] + lr[0] - lr[k] + c_hat[k].ln() - lc1);
    }
    Ok(out)
}

/// The same ratio from log-domain occupancies, for weights too small to
/// represent linearly.
pub fn rts_log_z_from_log_c(ladder: &TemperatureLadder, log_c: &[f64]) -> Vec<f64> {
    let lr = ladder.log_r();
    let lz = ladder.log_zhat();
    let mut out = vec![0.0; log_c.len()];
    for k in 1..log_c.len() {
        out[k] = lz[k] + lr[0] - lr[k] + log_c[k] - log_c[0];
    }
    out
}

pub fn rts(ladder: &TemperatureLadder, stats: &RaoBlackwellStats) -> Result<LogZEstimate> {
    let log_z = rts_log_z(ladder, &stats.c_hat)?;
    Ok(LogZEstimate::new(Method::Rts, log_z, stats.n_samples))
}

/// Delta-method bias and variance of `log Ẑ^RTS`.
///
/// `bias` and `var` describe an estimate built from one replicate's worth of
/// samples; [`BiasVariance::pooled`] rescales them for the pooled estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVariance {
    pub bias: Vec<f64>,
    pub var: Vec<f64>,
    pub n_replicates: usize,
}

impl BiasVariance {
    pub fn pooled(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.n_replicates as f64;
        (self.bias.iter().map(|b| b / r).collect(), self.var.iter().map(|v| v / r).collect())
    }
}

/// Moments of `ĉ` are taken across independent replicates (e.g. per-chain
/// statistics); `stats` supplies the `ĉ` plugged into the denominators.
pub fn rts_bias_variance(stats: &RaoBlackwellStats, replicates: &[RaoBlackwellStats]) -> Result<BiasVariance> {
    if replicates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "bias/variance needs at least 2 replicates, got {}",
            replicates.len()
        )));
    }
    let k = stats.k();
    let n = replicates.len() as f64;
    let cols: Vec<Vec<f64>> = (0..k).map(|j| replicates.iter().map(|r| r.c_hat[j]).collect()).collect();
    let (m1, s11) = mean_var(&cols[0]);
    let c1 = stats.c_hat[0];
    let mut bias = vec![0.0; k];
    let mut var = vec![0.0; k];
    for j in 1..k {
        let (mj, sjj) = mean_var(&cols[j]);
        let s1j = cols[0].iter().zip(&cols[j]).map(|(a, b)| (a - m1) * (b - mj)).sum::<f64>() / (n - 1.0);
        let cj = stats.c_hat[j];
        bias[j] = 0.5 * (s11 / (c1 * c1) - sjj / (cj * cj));
        var[j] = s11 / (c1 * c1) + sjj / (cj * cj) - 2.0 * s1j / (cj * c1);
    }
    Ok(BiasVariance { bias, var, n_replicates: replicates.len() })
}

/// The RTS ratio applied to smoothed visit counts instead of weights.
pub fn ts_counts(ladder: &TemperatureLadder, stats: &RaoBlackwellStats, smoothing: f64) -> Result<LogZEstimate> {
    if smoothing < 0.0 {
        return Err(Error::InvalidArgument("smoothing must be non-negative".into()));
    }
    let c: Vec<f64> = stats.raw_counts.iter().map(|&n| n as f64 + smoothing).collect();
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        return Err(Error::BaseNeverWeighted);
    }
    let c: Vec<f64> = c.into_iter().map(|v| v / total).collect();
    let log_z = rts_log_z(ladder, &c)?;
    Ok(LogZEstimate::new(Method::Ts, log_z, stats.n_samples))
}

/// `γ_t = 1 / t`.
pub fn harmonic_step(t: usize) -> f64 {
    1.0 / t as f64
}

/// Stochastic-approximation updates
/// `log Ẑ_k ← log Ẑ_k + γ_t (ĉ_k / r_k − ĉ_1 / r_1)`, one per statistics
/// batch, starting from the ladder's `log Ẑ`. `t` counts from 1.
pub fn mbar_stochastic<'a, I, G>(ladder: &TemperatureLadder, stats_stream: I, step: G) -> LogZEstimate
where
    I: IntoIterator<Item = &'a RaoBlackwellStats>,
    G: Fn(usize) -> f64,
{
    let r = ladder.prior();
    let mut log_z = ladder.log_zhat().to_vec();
    let mut n = 0;
    for (i, stats) in stats_stream.into_iter().enumerate() {
        let gamma = step(i + 1);
        let base = stats.c_hat[0] / r[0];
        for k in 1..log_z.len() {
            log_z[k] += gamma * (stats.c_hat[k] / r[k] - base);
        }
        n += stats.n_samples;
    }
    LogZEstimate::new(Method::MbarStoch, log_z, n)
}
