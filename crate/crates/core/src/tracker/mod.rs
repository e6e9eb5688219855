//! RBM training by persistent tempered chains, with the target partition
//! function tracked online from the same chains.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::{Prior, Spacing, TemperatureLadder};
use crate::math::{logit, sigmoid};
use crate::rbm::{data_log_likelihood, BaseBernoulli, BitDataset, RbmModel, RbmParams, RbmState, DEFAULT_CLIP};
use crate::rng::{substream_seed, Substream};
use crate::tempering::{init_iterations, ChainPool, ChainState, InitConfig, RaoBlackwellStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub n_chains: usize,
    pub sweeps_per_update: usize,
    pub k: usize,
    /// `r_k ∝ exp(λ β_k)`.
    pub prior_exponent: f64,
    /// Exponent of the smoothed `Ẑ` update.
    pub alpha: f64,
    pub learning_rate: f64,
    /// When set, the rate falls linearly from `learning_rate` at the first
    /// update to this value at the last.
    pub final_learning_rate: Option<f64>,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub cd1_pretrain_epochs: usize,
    pub cd1_learning_rate: f64,
    pub init: InitConfig,
    /// Cap on gradient updates after pretraining; `None` runs all epochs.
    pub max_updates: Option<usize>,
    /// Append a trace record every this many updates.
    pub record_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 50,
            n_chains: 100,
            sweeps_per_update: 25,
            k: 100,
            prior_exponent: 2.0,
            alpha: 0.2,
            learning_rate: 0.01,
            final_learning_rate: None,
            momentum: 0.9,
            epochs: 10,
            batch_size: 100,
            cd1_pretrain_epochs: 1,
            cd1_learning_rate: 0.05,
            init: InitConfig::default(),
            max_updates: None,
            record_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.sweeps_per_update == 0 || self.n_chains == 0 || self.batch_size == 0 || self.record_every == 0 {
            return Err(Error::InvalidArgument("sweeps, chains, batch size and record interval must be positive".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidLadder(format!("K ≥ 2 required, got {}", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: usize,
    pub log_zhat_k: f64,
    pub train_ll: f64,
    pub val_ll: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackTrace {
    pub records: Vec<TrackRecord>,
    /// Updates where the `Ẑ` correction was skipped or the negative phase
    /// fell back to unweighted chains.
    pub flags: Vec<String>,
}

impl TrackTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "log_zhat_K", "train_ll", "val_ll"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                format!("{:.17e}", r.log_zhat_k),
                format!("{:.17e}", r.train_ll),
                r.val_ll.map(|v| format!("{v:.17e}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of a smoothed `Ẑ` update.
#[derive(Debug, Clone, PartialEq)]
pub enum ZhatUpdate {
    Applied,
    /// `ĉ_1 = 0`; nothing changed.
    SkippedBase,
    /// Bins with `ĉ_k = 0` were left unchanged.
    Partial(Vec<usize>),
}

/// `log Ẑ_k += α (log r_1 − log r_k + log ĉ_k − log ĉ_1)` for every `k ≥ 2`.
pub fn smoothed_zhat_update(ladder: &mut TemperatureLadder, stats: &RaoBlackwellStats, alpha: f64) -> ZhatUpdate {
    let c = &stats.c_hat;
    if !(c[0] > 0.0) {
        return ZhatUpdate::SkippedBase;
    }
    let lr = ladder.log_r().to_vec();
    let mut lz = ladder.log_zhat().to_vec();
    let mut skipped = Vec::new();
    for k in 1..lz.len() {
        if c[k] > 0.0 {
            lz[k] += alpha * (lr[0] - lr[k] + c[k].ln() - c[0].ln());
        } else {
            skipped.push(k);
        }
    }
    ladder.set_log_zhat(lz).expect("finite smoothed update");
    if skipped.is_empty() {
        ZhatUpdate::Applied
    } else {
        ZhatUpdate::Partial(skipped)
    }
}

/// Largest tolerated `|log Ẑ_K|` before training aborts.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub fn divergence_check(log_zk: f64, t: usize) -> Result<()> {
    if log_zk.abs() <= DIVERGENCE_LIMIT {
        Ok(())
    } else {
        Err(Error::Diverged(format!("|log Ẑ_K| = {log_zk} at update {t}")))
    }
}

/// Gradient of the mean log-likelihood with respect to the RBM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    /// The negative phase fell back to unweighted chains.
    pub fallback: bool,
}

impl RbmGradient {
    fn zeros(m: usize, j: usize) -> Self {
        RbmGradient { w: vec![0.0; m * j], c: vec![0.0; m], b: vec![0.0; j], fallback: false }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.w.iter().chain(&self.c).chain(&self.b).copied().collect()
    }
}

/// Data term: `E_data[v σ(b + Wᵀv)ᵀ]` and friends.
fn positive_phase(p: &RbmParams, data: &BitDataset, rows: &[usize], g: &mut RbmGradient) {
    let inv = 1.0 / rows.len() as f64;
    let mut hin = vec![0.0; p.j];
    for &r in rows {
        let v = data.row(r);
        p.hidden_input(v, &mut hin);
        let ph: Vec<f64> = hin.iter().map(|&a| sigmoid(a)).collect();
        for i in 0..p.m {
            if v[i] != 0 {
                g.c[i] += inv;
                for (gw, h) in g.w[i * p.j..(i + 1) * p.j].iter_mut().zip(&ph) {
                    *gw += inv * h;
                }
            }
        }
        for (gb, h) in g.b.iter_mut().zip(&ph) {
            *gb += inv * h;
        }
    }
}

fn subtract_weighted(p: &RbmParams, x: &RbmState, wt: f64, g: &mut RbmGradient) {
    for i in 0..p.m {
        if x.v[i] != 0 {
            g.c[i] -= wt;
            for (gw, &h) in g.w[i * p.j..(i + 1) * p.j].iter_mut().zip(&x.h) {
                *gw -= wt * h as f64;
            }
        }
    }
    for (gb, &h) in g.b.iter_mut().zip(&x.h) {
        *gb -= wt * h as f64;
    }
}

/// Positive phase from `rows` of `data`; negative phase from the chains,
/// each weighted by its last `q(β_K | x)` normalized over chains.
///
/// When the total weight is below 1e-12 the chains currently at `β_K` (or
/// all chains, if none are) are used with equal weights and the gradient is
/// flagged.
pub fn pcd_gradient(p: &RbmParams, chains: &[ChainState<RbmState>], k: usize, data: &BitDataset, rows: &[usize]) -> RbmGradient {
    let mut g = RbmGradient::zeros(p.m, p.j);
    positive_phase(p, data, rows, &mut g);
    let weights: Vec<f64> = chains.iter().map(|c| c.last_conditional().get(k - 1).copied().unwrap_or(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if total >= 1e-12 {
        for (c, w) in chains.iter().zip(&weights) {
            if *w > 0.0 {
                subtract_weighted(p, &c.x, w / total, &mut g);
            }
        }
    } else {
        g.fallback = true;
        let top: Vec<&ChainState<RbmState>> = chains.iter().filter(|c| c.beta_index == k - 1).collect();
        let pick: Vec<&ChainState<RbmState>> = if top.is_empty() { chains.iter().collect() } else { top };
        let w = 1.0 / pick.len() as f64;
        for c in pick {
            subtract_weighted(p, &c.x, w, &mut g);
        }
    }
    g
}

/// One CD-1 gradient on `rows`.
pub fn cd1_gradient<R: Rng + ?Sized>(p: &RbmParams, data: &BitDataset, rows: &[usize], rng: &mut R) -> RbmGradient {
    let mut g = RbmGradient::zeros(p.m, p.j);
    positive_phase(p, data, rows, &mut g);
    let inv = 1.0 / rows.len() as f64;
    let mut hin = vec![0.0; p.j];
    for &r in rows {
        let v0 = data.row(r);
        p.hidden_input(v0, &mut hin);
        let h0: Vec<u8> = hin.iter().map(|&a| (rng.random::<f64>() < sigmoid(a)) as u8).collect();
        let v1: Vec<u8> = (0..p.m).map(|i| (rng.random::<f64>() < sigmoid(p.visible_input(i, &h0))) as u8).collect();
        p.hidden_input(&v1, &mut hin);
        for i in 0..p.m {
            if v1[i] != 0 {
                g.c[i] -= inv;
                for (gw, &a) in g.w[i * p.j..(i + 1) * p.j].iter_mut().zip(&hin) {
                    *gw -= inv * sigmoid(a);
                }
            }
        }
        for (gb, &a) in g.b.iter_mut().zip(&hin) {
            *gb -= inv * sigmoid(a);
        }
    }
    g
}

/// Gradient ascent with momentum.
#[derive(Debug, Clone)]
struct Momentum {
    velocity: Vec<f64>,
    rate: f64,
    mu: f64,
}

impl Momentum {
    fn new(n: usize, rate: f64, mu: f64) -> Self {
        Momentum { velocity: vec![0.0; n], rate, mu }
    }

    fn step(&mut self, p: &mut RbmParams, g: &RbmGradient) {
        let flat = g.flat();
        for (v, gi) in self.velocity.iter_mut().zip(&flat) {
            *v = self.mu * *v + self.rate * gi;
        }
        let (mw, mc) = (p.w.len(), p.c.len());
        for (i, v) in self.velocity.iter().enumerate() {
            if i < mw {
                p.w[i] += v;
            } else if i < mw + mc {
                p.c[i - mw] += v;
            } else {
                p.b[i - mw - mc] += v;
            }
        }
    }
}

/// Small random weights, visible biases at the data log-odds.
pub fn initial_params(data: &BitDataset, hidden: usize, seed: u64) -> RbmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, Substream::Train));
    let n = Normal::new(0.0, 0.01).unwrap();
    let base = BaseBernoulli::from_data(data, DEFAULT_CLIP);
    RbmParams {
        m: data.cols,
        j: hidden,
        w: (0..data.cols * hidden).map(|_| n.sample(&mut rng)).collect(),
        c: base.probs().iter().map(|&p| logit(p)).collect(),
        b: vec![0.0; hidden],
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RbmParams,
    pub trace: TrackTrace,
    pub ladder: TemperatureLadder,
}

/// Error raised mid-training, with the trace recorded up to that point.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub trace: TrackTrace,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace records)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for TrainFailure {}

/// CD-1 pretraining, `log Ẑ` initialization iterations, then persistent
/// tempered-chain training with the smoothed `Ẑ` update after every step.
///
/// `initial` overrides the random starting parameters; with a zero learning
/// rate this tracks the partition function of fixed parameters.
pub fn train_with_tracking(
    cfg: &TrainConfig,
    initial: Option<&RbmParams>,
    train: &BitDataset,
    val: Option<&BitDataset>,
    seed: u64,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    train_observed(cfg, initial, train, val, seed, &mut |_, _| {})
}

/// [`train_with_tracking`] that hands every new trace record, with the
/// parameters it describes, to `on_record` (e.g. for checkpointing).
pub fn train_observed(
    cfg: &TrainConfig,
    initial: Option<&RbmParams>,
    train: &BitDataset,
    val: Option<&BitDataset>,
    seed: u64,
    on_record: &mut dyn FnMut(&TrackRecord, &RbmParams),
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error: Error, trace: &TrackTrace| TrainFailure { error, trace: trace.clone() };
    let mut trace = TrackTrace::default();
    cfg.validate().map_err(|e| fail(e, &trace))?;
    if train.rows == 0 {
        return Err(fail(Error::InvalidArgument("empty training set".into()), &trace));
    }
    let mut params = match initial {
        Some(p) => p.clone(),
        None => initial_params(train, cfg.hidden, seed),
    };
    if params.m != train.cols {
        return Err(fail(Error::InvalidArgument("parameters and data disagree on visible units".into()), &trace));
    }
    let base = BaseBernoulli::from_data(train, DEFAULT_CLIP);
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, Substream::Train) ^ 1);
    let mut order: Vec<usize> = (0..train.rows).collect();

    for _ in 0..cfg.cd1_pretrain_epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            let g = cd1_gradient(&params, train, rows, &mut rng);
            for (w, d) in params.w.iter_mut().zip(&g.w) {
                *w += cfg.cd1_learning_rate * d;
            }
            for (c, d) in params.c.iter_mut().zip(&g.c) {
                *c += cfg.cd1_learning_rate * d;
            }
            for (b, d) in params.b.iter_mut().zip(&g.b) {
                *b += cfg.cd1_learning_rate * d;
            }
        }
    }

    let mut ladder = TemperatureLadder::build(cfg.k, Spacing::Uniform, Prior::Exponential { lambda: cfg.prior_exponent })
        .map_err(|e| fail(e, &trace))?;
    let mut model = RbmModel::new(params.clone(), base.clone()).map_err(|e| fail(e, &trace))?;
    let mut pool = ChainPool::new(&model, cfg.k, cfg.n_chains, substream_seed(seed, Substream::Init));
    init_iterations(&model, &mut ladder, &mut pool, &cfg.init);

    let mut opt = Momentum::new(params.w.len() + params.m + params.j, cfg.learning_rate, cfg.momentum);
    let per_epoch = train.rows.div_ceil(cfg.batch_size);
    let total = cfg.max_updates.map_or(cfg.epochs * per_epoch, |m| m.min(cfg.epochs * per_epoch));
    let frozen = cfg.learning_rate == 0.0 && cfg.final_learning_rate.unwrap_or(0.0) == 0.0;
    let mut t = 0;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            if cfg.max_updates.is_some_and(|m| t >= m) {
                break 'epochs;
            }
            t += 1;
            let out = pool.run(&model, &ladder, cfg.sweeps_per_update, false);
            match smoothed_zhat_update(&mut ladder, &out.pooled, cfg.alpha) {
                ZhatUpdate::Applied => {}
                ZhatUpdate::SkippedBase => trace.flags.push(format!("t={t}: base never weighted, Ẑ update skipped")),
                ZhatUpdate::Partial(b) => trace.flags.push(format!("t={t}: bins {b:?} unweighted, left unchanged")),
            }
            let log_zk = *ladder.log_zhat().last().unwrap();
            if let Err(e) = divergence_check(log_zk, t) {
                return Err(fail(e, &trace));
            }
            if t % cfg.record_every == 0 {
                trace.records.push(TrackRecord {
                    t,
                    log_zhat_k: log_zk,
                    train_ll: data_log_likelihood(&params, log_zk, train),
                    val_ll: val.filter(|v| v.rows > 0).map(|v| data_log_likelihood(&params, log_zk, v)),
                });
                on_record(trace.records.last().unwrap(), &params);
            }
            let g = pcd_gradient(&params, pool.chains(), cfg.k, train, rows);
            if g.fallback {
                trace.flags.push(format!("t={t}: negative phase fell back to unweighted chains"));
            }
            if !frozen {
                if let Some(end) = cfg.final_learning_rate {
                    let frac = if total > 1 { (t - 1) as f64 / (total - 1) as f64 } else { 0.0 };
                    opt.rate = cfg.learning_rate + frac * (end - cfg.learning_rate);
                }
                opt.step(&mut params, &g);
                if let Err(e) = params.validate() {
                    return Err(fail(e, &trace));
                }
                model = RbmModel::new(params.clone(), base.clone()).map_err(|e| fail(e, &trace))?;
            }
        }
    }
    Ok(TrainOutcome { params, trace, ladder })
}

#[cfg(test)]
mod tests;
