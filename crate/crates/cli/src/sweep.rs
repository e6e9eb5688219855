//! `sweep-k`: how estimator error varies with the number of temperatures,
//! from bootstrap resamples of one stored tempered run.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use rts_core::estimators::{rts, ti_rb, Method, SampleLog};
use rts_core::ladder::TemperatureLadder;
use rts_core::math::mean_var;
use rts_core::model::TemperedModel;
use rts_core::rng::{chain_rng, substream_seed, Substream};

use crate::config::ExperimentConfig;
use crate::estimate::{create, tempered_run};
use crate::model::{build, Built};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub method: Method,
    pub rmse: f64,
    pub mean: f64,
    pub sd: f64,
    pub reference: f64,
    pub n_boot: usize,
}

fn target_estimate(m: Method, log: &SampleLog, ladder: &TemperatureLadder) -> Result<f64> {
    let est = match m {
        Method::Rts => rts(ladder, &log.reweighted_stats(ladder))?,
        Method::TiRb => ti_rb(ladder, &log.reweighted_stats(ladder))?,
        _ => unreachable!("rejected by config validation"),
    };
    Ok(est.log_z_target())
}

fn sweep<M: TemperedModel>(model: &M, oracle: Option<f64>, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let methods = cfg.sweep_methods()?;
    let run = tempered_run(model, cfg, true)?;
    let log = run.out.samples.expect("samples kept");
    let reference = match oracle {
        Some(z) => z,
        None => {
            log::info!("no exact log Z; RMSE is measured against the full-run RTS estimate");
            rts(&run.ladder, &run.out.pooled)?.log_z_target()
        }
    };
    let s = &cfg.sweep_k;
    let boot_seed = substream_seed(cfg.seed, Substream::Bootstrap);
    let mut rows = Vec::new();
    for &k in &s.ks {
        let ladder = run.ladder.regrid(k, cfg.ladder.spacing(), cfg.ladder.prior())?;
        // the same resamples at every K
        let ests: Vec<Vec<f64>> = (0..s.bootstrap as u64)
            .into_par_iter()
            .map(|b| {
                let boot = log.bootstrap(s.samples, &mut chain_rng(boot_seed, b));
                methods.iter().map(|&m| target_estimate(m, &boot, &ladder)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()
            .with_context(|| format!("bootstrap at K={k}"))?;
        for (i, &method) in methods.iter().enumerate() {
            let v: Vec<f64> = ests.iter().map(|e| e[i]).collect();
            let (mean, var) = mean_var(&v);
            let mse = v.iter().map(|x| (x - reference).powi(2)).sum::<f64>() / v.len() as f64;
            rows.push(SweepRow { k, method, rmse: mse.sqrt(), mean, sd: var.sqrt(), reference, n_boot: v.len() });
        }
    }
    Ok(rows)
}

pub fn cmd_sweep_k(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SweepRow>> {
    let ladder = TemperatureLadder::build(cfg.ladder.k, cfg.ladder.spacing(), cfg.ladder.prior())?;
    let built = build(cfg, ladder.betas())?;
    let oracle = built.oracle();
    let rows = match &built {
        Built::Rbm(m) => sweep(m, oracle, cfg)?,
        Built::Gmm(m, _) => sweep(m, oracle, cfg)?,
        Built::Toy(m) => sweep(m, oracle, cfg)?,
    };
    let mut w = csv::Writer::from_writer(create(&dir.join("sweep.csv"))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
