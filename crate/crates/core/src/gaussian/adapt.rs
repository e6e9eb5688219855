//! Step-size adaptation: endpoint tuning by stochastic approximation, a
//! pilot pass over the ladder, and a monotone logistic acceptance model
//! inverted for the target acceptance rate.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{hmc_step, GmmTarget, StepSchedule, LEAPFROG_STEPS};
use crate::math::{logit, sigmoid};
use crate::rng::{chain_rng, substream_seed, Substream};

pub const TARGET_ACCEPT: f64 = 0.651;
const LOGIT_BOX: f64 = 10.0;

/// One HMC proposal outcome in bin `bin` with step size `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptRecord {
    pub bin: usize,
    pub eps: f64,
    pub accepted: bool,
}

/// Per-bin logistic acceptance curves `σ(w0_j + w1_j ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcAcceptModel {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub target_accept: f64,
    /// Bins whose records were all accepted or all rejected.
    pub degenerate: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl HmcAcceptModel {
    pub fn accept_prob(&self, bin: usize, eps: f64) -> f64 {
        sigmoid(self.w0[bin] + self.w1[bin] * eps)
    }

    pub fn len(&self) -> usize {
        self.w0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w0.is_empty()
    }
}

/// Non-increasing least-squares fit (pool adjacent violators).
fn isotonic_decreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// Euclidean projection of `(a, b)` onto: both non-increasing in the bin
/// index, `b ≤ a` per bin, and the logit box, by Dykstra's alternating
/// scheme.
fn project(a: &mut [f64], b: &mut [f64]) {
    let n = a.len();
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; n];
    let mut qa = vec![0.0; n];
    let mut qb = vec![0.0; n];
    for _ in 0..500 {
        let prev: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        // monotone and boxed
        let ya: Vec<f64> = (0..n).map(|i| a[i] + pa[i]).collect();
        let yb: Vec<f64> = (0..n).map(|i| b[i] + pb[i]).collect();
        let za: Vec<f64> = isotonic_decreasing(&ya).into_iter().map(|v| v.clamp(-LOGIT_BOX, LOGIT_BOX)).collect();
        let zb: Vec<f64> = isotonic_decreasing(&yb).into_iter().map(|v| v.clamp(-LOGIT_BOX, LOGIT_BOX)).collect();
        for i in 0..n {
            pa[i] = ya[i] - za[i];
            pb[i] = yb[i] - zb[i];
        }
        // slope sign
        for i in 0..n {
            let (ua, ub) = (za[i] + qa[i], zb[i] + qb[i]);
            let (na, nb) = if ub > ua {
                let m = 0.5 * (ua + ub);
                (m, m)
            } else {
                (ua, ub)
            };
            qa[i] = ua - na;
            qb[i] = ub - nb;
            a[i] = na;
            b[i] = nb;
        }
        let change = a.iter().chain(b.iter()).zip(&prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if change < 1e-13 {
            break;
        }
    }
}

/// Constrained per-bin logistic regression of acceptance on step size.
///
/// Each curve is parametrized by its logits at `eps_min` and `eps_max`, so the
/// non-positive slope and the monotonicity across bins at both endpoints are
/// linear constraints. Maximized by accelerated projected gradient ascent on
/// the mean log-likelihood until the gradient mapping falls below 1e-6.
pub fn fit_accept_model(records: &[AcceptRecord], n_bins: usize, eps_min: f64, eps_max: f64) -> Result<HmcAcceptModel> {
    if !(eps_min > 0.0 && eps_max > eps_min) {
        return Err(Error::InvalidArgument(format!("need 0 < eps_min < eps_max, got {eps_min}, {eps_max}")));
    }
    let mut per_bin = vec![Vec::new(); n_bins];
    for r in records {
        if r.bin >= n_bins {
            return Err(Error::InvalidArgument(format!("record bin {} out of range", r.bin)));
        }
        let t = (r.eps - eps_min) / (eps_max - eps_min);
        per_bin[r.bin].push((t, r.accepted as u8 as f64));
    }
    if let Some(j) = per_bin.iter().position(|v| v.is_empty()) {
        return Err(Error::InvalidArgument(format!("no acceptance records in bin {j}")));
    }
    let degenerate: Vec<usize> = (0..n_bins)
        .filter(|&j| per_bin[j].iter().all(|r| r.1 == per_bin[j][0].1))
        .collect();
    let n = records.len() as f64;
    let grad = |a: &[f64], b: &[f64], ga: &mut [f64], gb: &mut [f64]| {
        for j in 0..n_bins {
            let (mut sa, mut sb) = (0.0, 0.0);
            for &(t, y) in &per_bin[j] {
                let r = y - sigmoid(a[j] * (1.0 - t) + b[j] * t);
                sa += r * (1.0 - t);
                sb += r * t;
            }
            ga[j] = sa / n;
            gb[j] = sb / n;
        }
    };
    // curvature bound of the mean log-likelihood
    let lip = 0.25 * per_bin.iter().map(|v| v.len()).max().unwrap() as f64 / n * 2.0;
    let step = 1.0 / lip;

    let init: Vec<f64> = per_bin
        .iter()
        .map(|v| {
            let rate = (v.iter().map(|r| r.1).sum::<f64>() + 0.5) / (v.len() as f64 + 1.0);
            logit(rate)
        })
        .collect();
    let (mut a, mut b) = (init.clone(), init);
    project(&mut a, &mut b);
    let (mut ya, mut yb) = (a.clone(), b.clone());
    let mut tk: f64 = 1.0;
    let (mut ga, mut gb) = (vec![0.0; n_bins], vec![0.0; n_bins]);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=50_000 {
        iterations = it;
        grad(&ya, &yb, &mut ga, &mut gb);
        let mut na: Vec<f64> = (0..n_bins).map(|j| ya[j] + step * ga[j]).collect();
        let mut nb: Vec<f64> = (0..n_bins).map(|j| yb[j] + step * gb[j]).collect();
        project(&mut na, &mut nb);
        // gradient mapping at the current iterate
        grad(&na, &nb, &mut ga, &mut gb);
        let mut ta: Vec<f64> = (0..n_bins).map(|j| na[j] + step * ga[j]).collect();
        let mut tb: Vec<f64> = (0..n_bins).map(|j| nb[j] + step * gb[j]).collect();
        project(&mut ta, &mut tb);
        let gmap = ta
            .iter()
            .zip(&na)
            .chain(tb.iter().zip(&nb))
            .map(|(x, y)| ((x - y) / step).powi(2))
            .sum::<f64>()
            .sqrt();
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let mom = (tk - 1.0) / tn;
        ya = (0..n_bins).map(|j| na[j] + mom * (na[j] - a[j])).collect();
        yb = (0..n_bins).map(|j| nb[j] + mom * (nb[j] - b[j])).collect();
        a = na;
        b = nb;
        tk = tn;
        if gmap < 1e-6 {
            converged = true;
            break;
        }
    }
    let span = eps_max - eps_min;
    let w1: Vec<f64> = (0..n_bins).map(|j| (b[j] - a[j]) / span).collect();
    let w0: Vec<f64> = (0..n_bins).map(|j| a[j] - w1[j] * eps_min).collect();
    Ok(HmcAcceptModel { w0, w1, eps_min, eps_max, target_accept: TARGET_ACCEPT, degenerate, iterations, converged })
}

/// Step size whose modeled acceptance equals the target, projected into
/// `[eps_min, eps_max]`. A flat curve gives `eps_max` when it already meets
/// the target and `eps_min` otherwise.
pub fn eps_opt(model: &HmcAcceptModel, bin: usize) -> f64 {
    let (w0, w1) = (model.w0[bin], model.w1[bin]);
    if w1.abs() < 1e-12 {
        return if sigmoid(w0) >= model.target_accept { model.eps_max } else { model.eps_min };
    }
    ((logit(model.target_accept) - w0) / w1).clamp(model.eps_min, model.eps_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub batches: usize,
    pub batch_size: usize,
    /// `γ_t = gain / t`.
    pub gain: f64,
    pub initial_eps: f64,
    pub target_accept: f64,
    pub n_leapfrog: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { batches: 40, batch_size: 50, gain: 0.5, initial_eps: 0.1, target_accept: TARGET_ACCEPT, n_leapfrog: LEAPFROG_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointTuning {
    pub eps_min: f64,
    pub eps_max: f64,
    /// Acceptance rate of the last batch at β = 1 and β = 0.
    pub final_accept_min: f64,
    pub final_accept_max: f64,
    pub swapped: bool,
}

const BISECTIONS: usize = 6;

fn batch_rate<R: Rng + ?Sized>(target: &GmmTarget, x: &mut Vec<f64>, beta: f64, eps: f64, n: usize, steps: usize, rng: &mut R) -> f64 {
    (0..n).filter(|_| hmc_step(target, x, beta, eps, steps, rng)).count() as f64 / n as f64
}

/// Robbins-Monro on `log ε` at a single temperature, started from a value
/// found by doubling/halving until the batch rate crosses the target and
/// then bisecting that bracket. Returns `(ε, last rate)`.
fn tune_at<R: Rng + ?Sized>(target: &GmmTarget, x: &mut Vec<f64>, beta: f64, cfg: &TuneConfig, rng: &mut R) -> (f64, f64) {
    let mut log_eps = cfg.initial_eps.ln();
    let mut rate_at = |le: f64, x: &mut Vec<f64>| batch_rate(target, x, beta, le.exp(), cfg.batch_size, cfg.n_leapfrog, rng);
    // `lo` accepts above target, `hi` below
    let (mut lo, mut hi) = (None, None);
    for _ in 0..30 {
        if rate_at(log_eps, x) > cfg.target_accept {
            lo = Some(log_eps);
            match hi {
                None => log_eps += std::f64::consts::LN_2,
                Some(_) => break,
            }
        } else {
            hi = Some(log_eps);
            match lo {
                None => log_eps -= std::f64::consts::LN_2,
                Some(_) => break,
            }
        }
    }
    if let (Some(mut a), Some(mut b)) = (lo, hi) {
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (a + b);
            if rate_at(mid, x) > cfg.target_accept {
                a = mid;
            } else {
                b = mid;
            }
        }
        log_eps = 0.5 * (a + b);
    }
    let mut rate = 0.0;
    for t in 1..=cfg.batches {
        rate = batch_rate(target, x, beta, log_eps.exp(), cfg.batch_size, cfg.n_leapfrog, rng);
        log_eps += cfg.gain / t as f64 * (rate - cfg.target_accept);
    }
    (log_eps.exp(), rate)
}

/// Tune HMC step sizes at β = 0 (giving `eps_max`) and β = 1 (giving
/// `eps_min`).
pub fn tune_endpoint_stepsizes(target: &GmmTarget, cfg: &TuneConfig, seed: u64) -> EndpointTuning {
    let stream = substream_seed(seed, Substream::Tune);
    let mut rng0 = chain_rng(stream, 0);
    let mut rng1 = chain_rng(stream, 1);
    let s = target.prior_scale.sqrt();
    let mut x0: Vec<f64> = (0..target.dim()).map(|_| s * rng0.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let mut x1 = target.sample_exact(&mut rng1);
    let (e_hi, r_hi) = tune_at(target, &mut x0, 0.0, cfg, &mut rng0);
    let (e_lo, r_lo) = tune_at(target, &mut x1, 1.0, cfg, &mut rng1);
    if e_lo > e_hi {
        log::warn!("endpoint step sizes out of order ({e_lo} > {e_hi}); swapping");
        EndpointTuning { eps_min: e_hi, eps_max: e_lo, final_accept_min: r_hi, final_accept_max: r_lo, swapped: true }
    } else {
        EndpointTuning { eps_min: e_lo, eps_max: e_hi, final_accept_min: r_lo, final_accept_max: r_hi, swapped: false }
    }
}

/// One annealing pass up the ladder from a base draw, spending
/// `per_bin` proposals at each rung with step sizes uniform in
/// `[eps_min, eps_max]`.
pub fn pilot_accept_records(
    target: &GmmTarget,
    betas: &[f64],
    eps_min: f64,
    eps_max: f64,
    per_bin: usize,
    n_leapfrog: usize,
    seed: u64,
) -> Vec<AcceptRecord> {
    let mut rng = chain_rng(substream_seed(seed, Substream::Tune), 2);
    let s = target.prior_scale.sqrt();
    let mut x: Vec<f64> = (0..target.dim()).map(|_| s * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let mut out = Vec::with_capacity(betas.len() * per_bin);
    for (bin, &beta) in betas.iter().enumerate() {
        for _ in 0..per_bin {
            let eps = eps_min + (eps_max - eps_min) * rng.random::<f64>();
            let accepted = hmc_step(target, &mut x, beta, eps, n_leapfrog, &mut rng);
            out.push(AcceptRecord { bin, eps, accepted });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub tune: TuneConfig,
    pub pilot_per_bin: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig { tune: TuneConfig::default(), pilot_per_bin: 50 }
    }
}

/// Endpoint tuning, pilot, fit and per-rung step sizes, frozen thereafter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub tuning: EndpointTuning,
    pub model: HmcAcceptModel,
    pub schedule: StepSchedule,
    /// Empirical pilot acceptance per rung.
    pub pilot_rates: Vec<f64>,
}

impl AdaptiveSchedule {
    pub fn build(target: &GmmTarget, betas: &[f64], cfg: &AdaptConfig, seed: u64) -> Result<Self> {
        let tuning = tune_endpoint_stepsizes(target, &cfg.tune, seed);
        let (lo, hi) = if tuning.eps_max > tuning.eps_min {
            (tuning.eps_min, tuning.eps_max)
        } else {
            (tuning.eps_min, tuning.eps_min * (1.0 + 1e-6))
        };
        let records = pilot_accept_records(target, betas, lo, hi, cfg.pilot_per_bin, cfg.tune.n_leapfrog, seed);
        let mut model = fit_accept_model(&records, betas.len(), lo, hi)?;
        model.target_accept = cfg.tune.target_accept;
        let eps = (0..betas.len()).map(|j| eps_opt(&model, j)).collect();
        let mut pilot_rates = vec![0.0; betas.len()];
        for r in &records {
            pilot_rates[r.bin] += r.accepted as u8 as f64 / cfg.pilot_per_bin as f64;
        }
        Ok(AdaptiveSchedule { tuning, model, schedule: StepSchedule { betas: betas.to_vec(), eps }, pilot_rates })
    }

    /// Rows of `beta, eps_opt, accept_rate, model_accept`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "eps_opt", "accept_rate", "model_accept"])?;
        for j in 0..self.schedule.betas.len() {
            let e = self.schedule.eps[j];
            w.write_record([
                self.schedule.betas[j].to_string(),
                e.to_string(),
                self.pilot_rates[j].to_string(),
                self.model.accept_prob(j, e).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
