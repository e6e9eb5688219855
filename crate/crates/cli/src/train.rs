//! `train`: RBM training with online log Z tracking, plus `hmc-tune` and
//! `oracle`, the two small commands.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use rts_core::gaussian::AdaptiveSchedule;
use rts_core::ladder::TemperatureLadder;
use rts_core::rbm::{load_rbm, rbm_exact_log_z, save_rbm};
use rts_core::tracker::{train_observed, TrackTrace};

use crate::config::{ExperimentConfig, ModelKind};
use crate::estimate::{create, write_json};
use crate::model::{gmm_target_only, load_data, rbm_params};

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub train_rows: usize,
    pub val_rows: usize,
    pub records: usize,
    pub final_log_zhat_k: Option<f64>,
    pub final_train_ll: Option<f64>,
    pub final_val_ll: Option<f64>,
    pub checkpoints: Vec<String>,
    pub flags: Vec<String>,
}

fn write_trace(dir: &Path, trace: &TrackTrace) -> Result<()> {
    trace.write_csv(create(&dir.join("trace.csv"))?)?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainSummary> {
    if cfg.model.kind != ModelKind::Rbm {
        bail!("train needs model.kind = \"rbm\"");
    }
    let initial = rbm_params(cfg)?;
    let data = load_data(cfg, initial.as_ref())?;
    let val_rows = cfg.data.val_rows;
    if val_rows >= data.rows {
        bail!("data.val_rows = {val_rows} leaves no training rows out of {}", data.rows);
    }
    let train = data.slice(0, data.rows - val_rows);
    let val = (val_rows > 0).then(|| data.slice(data.rows - val_rows, val_rows));

    let mut checkpoints = Vec::new();
    let mut save_err = None;
    let every = cfg.checkpoint_every;
    let mut n_records = 0;
    let mut on_record = |rec: &rts_core::tracker::TrackRecord, p: &rts_core::rbm::RbmParams| {
        n_records += 1;
        if every > 0 && n_records % every == 0 && save_err.is_none() {
            let name = format!("checkpoint_{:06}.rbm", rec.t);
            match save_rbm(dir.join(&name), p) {
                Ok(()) => checkpoints.push(name),
                Err(e) => save_err = Some(e),
            }
        }
    };
    let result = train_observed(&cfg.train, initial.as_ref(), &train, val.as_ref(), cfg.seed, &mut on_record);
    if let Some(e) = save_err {
        return Err(anyhow!(e).context("writing checkpoint"));
    }
    let outcome = match result {
        Ok(o) => o,
        Err(fail) => {
            write_trace(dir, &fail.trace)?;
            return Err(anyhow!(fail).context("training aborted; partial trace written"));
        }
    };
    write_trace(dir, &outcome.trace)?;
    save_rbm(dir.join("final.rbm"), &outcome.params)?;
    let last = outcome.trace.records.last();
    let summary = TrainSummary {
        train_rows: train.rows,
        val_rows,
        records: outcome.trace.records.len(),
        final_log_zhat_k: last.map(|r| r.log_zhat_k),
        final_train_ll: last.map(|r| r.train_ll),
        final_val_ll: last.and_then(|r| r.val_ll),
        checkpoints,
        flags: outcome.trace.flags.clone(),
    };
    write_json(&dir.join("train.json"), &summary)?;
    Ok(summary)
}

pub fn cmd_hmc_tune(cfg: &ExperimentConfig, dir: &Path) -> Result<AdaptiveSchedule> {
    let target = gmm_target_only(cfg)?;
    let ladder = TemperatureLadder::build(cfg.ladder.k, cfg.ladder.spacing(), cfg.ladder.prior())?;
    let sched = AdaptiveSchedule::build(&target, ladder.betas(), &cfg.hmc.adapt_config(), cfg.seed)?;
    sched.write_csv(create(&dir.join("hmc_tune.csv"))?)?;
    write_json(&dir.join("hmc_tune.json"), &sched)?;
    Ok(sched)
}

/// Exact log Z of a stored RBM, formatted to 15 significant digits.
pub fn cmd_oracle(params_path: &Path) -> Result<String> {
    let p = load_rbm(params_path).with_context(|| format!("loading {}", params_path.display()))?;
    let z = rbm_exact_log_z(&p)?;
    Ok(format_significant(z, 15))
}

pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let int_digits = x.abs().log10().floor() as i64 + 1;
    let decimals = (digits as i64 - int_digits).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
