//! `estimate`: initialize log Ẑ, run the tempered chains, apply every
//! requested estimator.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use rts_core::annealing::{ais_with, anneal_aggregate, raise_with, uniform_betas, write_weights_csv, AnnealRun};
use rts_core::estimators::{
    mbar, mbar_stochastic, mixed_zhat_mle, rts, rts_bias_variance, harmonic_step, stationary_estimate, ti, ti_rb,
    ts_counts, LogZEstimate, Method, StationaryMode, TiRule,
};
use rts_core::ladder::TemperatureLadder;
use rts_core::model::TemperedModel;
use rts_core::rng::{substream_seed, Substream};
use rts_core::tempering::{
    empirical_transition_matrix, init_iterations, write_init_csv, write_matrix_csv, write_stats_csv, ChainPool,
    InitReport, RunOutput,
};

use crate::config::ExperimentConfig;
use crate::model::{build, Built};

/// One estimator's output as written to `estimates.json`.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    pub log_z: Vec<f64>,
    pub bias_est: Option<Vec<f64>>,
    pub var_est: Option<Vec<f64>>,
    pub n_samples: u64,
    pub seed: u64,
    /// Effective sample size of the importance weights (annealing only).
    pub ess: Option<f64>,
    pub warnings: Vec<String>,
}

impl EstimateRecord {
    fn from_estimate(e: LogZEstimate, seed: u64) -> Self {
        EstimateRecord {
            method: e.method,
            k: e.log_z.len(),
            log_z: e.log_z,
            bias_est: e.bias_est,
            var_est: e.var_est,
            n_samples: e.n_samples,
            seed,
            ess: None,
            warnings: e.warnings,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InitSummary {
    pub iterations_used: usize,
    pub converged: bool,
    pub max_abs_gap: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatesFile {
    pub model: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub chains: usize,
    pub sweeps: usize,
    pub oracle_log_z: Option<f64>,
    pub init: InitSummary,
    pub estimates: Vec<EstimateRecord>,
}

/// Everything a tempered run produces, before anything is written.
pub struct TemperedRun {
    pub ladder: TemperatureLadder,
    pub report: InitReport,
    pub out: RunOutput,
}

/// Initialization iterations on the `init` substream, then the main run on
/// fresh `main` streams starting from the initialized states.
pub fn tempered_run<M: TemperedModel>(model: &M, cfg: &ExperimentConfig, keep_samples: bool) -> Result<TemperedRun> {
    let b = &cfg.budget;
    let mut ladder = TemperatureLadder::build(cfg.ladder.k, cfg.ladder.spacing(), cfg.ladder.prior())?;
    let mut pool = ChainPool::new(model, ladder.len(), b.chains, substream_seed(cfg.seed, Substream::Init));
    let report = init_iterations(model, &mut ladder, &mut pool, &b.init);
    if !report.converged {
        log::warn!(
            "log Ẑ initialization stopped after {} iterations with gap {:.3e} (threshold {:.3e})",
            report.iterations_used,
            report.max_abs_gap,
            report.threshold
        );
    }
    let states = pool.chains().iter().map(|c| c.x.clone()).collect();
    let mut pool = ChainPool::from_states(states, ladder.len(), substream_seed(cfg.seed, Substream::Main));
    let out = pool.run(model, &ladder, b.sweeps, keep_samples);
    Ok(TemperedRun { ladder, report, out })
}

fn anneal_record(run: &AnnealRun, method: Method, seed: u64) -> Result<EstimateRecord> {
    let (est, ess) = anneal_aggregate(run)?;
    Ok(EstimateRecord {
        method,
        k: 2,
        log_z: vec![0.0, est],
        bias_est: None,
        var_est: None,
        n_samples: run.log_weights.len() as u64,
        seed,
        ess: Some(ess),
        warnings: Vec::new(),
    })
}

fn estimate_all<M: TemperedModel>(model: &M, cfg: &ExperimentConfig, dir: &Path) -> Result<(TemperedRun, Vec<EstimateRecord>)> {
    let methods = cfg.methods()?;
    let b = &cfg.budget;
    let seed = cfg.seed;
    let keep = methods.iter().any(|m| matches!(m, Method::Mbar | Method::MixedMle));
    let run = tempered_run(model, cfg, keep)?;
    let (ladder, stats) = (&run.ladder, &run.out.pooled);
    let temps = b.anneal_temps.unwrap_or(b.sweeps.max(2));
    let mut records = Vec::new();
    for &m in &methods {
        let ctx = || format!("estimator {m}");
        let est = match m {
            Method::Rts => {
                let mut e = rts(ladder, stats).with_context(ctx)?;
                if run.out.per_chain.len() >= 2 {
                    let (bias, var) = rts_bias_variance(stats, &run.out.per_chain).with_context(ctx)?.pooled();
                    e.bias_est = Some(bias);
                    e.var_est = Some(var);
                }
                e
            }
            Method::Ts => ts_counts(ladder, stats, b.ts_smoothing).with_context(ctx)?,
            Method::TiRiemann => ti(ladder, stats, TiRule::Riemann).with_context(ctx)?,
            Method::TiTrap => ti(ladder, stats, TiRule::Trapezoid).with_context(ctx)?,
            Method::TiRb => ti_rb(ladder, stats).with_context(ctx)?,
            Method::Mbar => mbar(run.out.samples.as_ref().unwrap(), ladder, b.mbar_max_iters, b.mbar_tol).with_context(ctx)?,
            Method::MbarStoch => mbar_stochastic(ladder, &run.out.per_chain, harmonic_step),
            Method::MixedMle => {
                mixed_zhat_mle(run.out.samples.as_ref().unwrap(), ladder, b.mbar_max_iters, b.mbar_tol).with_context(ctx)?
            }
            Method::Sd => stationary_estimate(ladder, stats, StationaryMode::Sd).with_context(ctx)?,
            Method::Rsd => stationary_estimate(ladder, stats, StationaryMode::Rsd).with_context(ctx)?,
            Method::Ais | Method::Raise => {
                let betas = uniform_betas(temps);
                let run = if m == Method::Ais {
                    ais_with(model, &betas, b.chains, 1, seed)
                } else {
                    raise_with(model, &betas, b.chains, 1, None, seed)
                }
                .with_context(ctx)?;
                let name = if m == Method::Ais { "ais_weights.csv" } else { "raise_weights.csv" };
                write_weights_csv(create(&dir.join(name))?, &run)?;
                records.push(anneal_record(&run, m, seed)?);
                continue;
            }
        };
        records.push(EstimateRecord::from_estimate(est, seed));
    }
    Ok((run, records))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_estimate(cfg: &ExperimentConfig, dir: &Path) -> Result<EstimatesFile> {
    let ladder = TemperatureLadder::build(cfg.ladder.k, cfg.ladder.spacing(), cfg.ladder.prior())?;
    let built = build(cfg, ladder.betas())?;
    let (run, estimates) = match &built {
        Built::Rbm(m) => estimate_all(m, cfg, dir)?,
        Built::Gmm(m, _) => estimate_all(m, cfg, dir)?,
        Built::Toy(m) => estimate_all(m, cfg, dir)?,
    };
    write_stats_csv(create(&dir.join("stats.csv"))?, &run.ladder, &run.out.pooled)?;
    write_matrix_csv(create(&dir.join("transitions.csv"))?, &empirical_transition_matrix(&run.out.pooled).rows)?;
    write_init_csv(create(&dir.join("init.csv"))?, &run.ladder, &run.report)?;
    let file = EstimatesFile {
        model: built.describe(),
        seed: cfg.seed,
        k: run.ladder.len(),
        chains: cfg.budget.chains,
        sweeps: cfg.budget.sweeps,
        oracle_log_z: built.oracle(),
        init: InitSummary {
            iterations_used: run.report.iterations_used,
            converged: run.report.converged,
            max_abs_gap: run.report.max_abs_gap,
            threshold: run.report.threshold,
        },
        estimates,
    };
    write_json(&dir.join("estimates.json"), &file)?;
    Ok(file)
}
