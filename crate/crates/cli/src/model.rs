//! Turning a manifest into data, parameters and a tempered model.

use anyhow::{bail, Context, Result};

use rts_core::gaussian::{AdaptiveSchedule, GmmModel, GmmTarget, StepSchedule};
use rts_core::rbm::{
    binarize, load_idx, load_rbm, prototype_dataset, rbm_exact_log_z, BaseBernoulli, BitDataset, ExactSampler, RbmModel,
    RbmParams, DEFAULT_CLIP,
};
use rts_core::rng::{chain_rng, substream_seed, Substream};
use rts_core::toy::TwoStateModel;

use crate::config::{BaseKind, DataSource, ExperimentConfig, ModelKind};

/// Enumerating 2^20 states is quick; beyond that the oracle is skipped
/// unless asked for explicitly.
const CHEAP_ENUMERATION: usize = 20;

pub enum Built {
    Rbm(RbmModel),
    Gmm(GmmModel, Option<AdaptiveSchedule>),
    Toy(TwoStateModel),
}

impl Built {
    pub fn describe(&self) -> String {
        match self {
            Built::Rbm(m) => format!("rbm {}x{}", m.params.m, m.params.j),
            Built::Gmm(m, _) => format!("gmm {} components in {} dimensions", m.target.means.len(), m.target.dim()),
            Built::Toy(_) => "two-state".into(),
        }
    }

    /// Exact target `log Z` when it is cheap to get.
    pub fn oracle(&self) -> Option<f64> {
        match self {
            Built::Rbm(m) if m.params.m.min(m.params.j) <= CHEAP_ENUMERATION => rbm_exact_log_z(&m.params).ok(),
            Built::Rbm(_) => None,
            Built::Gmm(m, _) => Some(m.target.analytic_log_z()),
            Built::Toy(t) => Some(t.exact_log_z_at(1.0)),
        }
    }
}

/// Parameters named by the manifest, if any.
pub fn rbm_params(cfg: &ExperimentConfig) -> Result<Option<RbmParams>> {
    let m = &cfg.model;
    if let Some(path) = &m.params {
        return Ok(Some(load_rbm(path).with_context(|| format!("loading {}", path.display()))?));
    }
    Ok(m.random.map(|r| RbmParams::random(r.visible, r.hidden, r.seed, r.scale)))
}

/// The binary dataset described by `[data]`; `params` is needed when the
/// data are drawn from the model itself.
pub fn load_data(cfg: &ExperimentConfig, params: Option<&RbmParams>) -> Result<BitDataset> {
    let d = &cfg.data;
    let seed = substream_seed(cfg.seed, Substream::Data);
    let data = match d.source {
        DataSource::Idx => {
            let path = d.path.as_ref().context("data.path missing")?;
            let arr = load_idx(path).with_context(|| format!("reading {}", path.display()))?;
            let all = binarize(&arr, d.threshold);
            match d.rows {
                Some(n) => all.slice(0, n),
                None => all,
            }
        }
        DataSource::Model => {
            let p = params.context("data.source = \"model\" needs RBM parameters")?;
            let sampler = ExactSampler::new(p).context("drawing data from the model")?;
            sampler.sample_dataset(p, d.rows.unwrap_or(2000), &mut chain_rng(seed, 0))
        }
        DataSource::Prototypes => {
            let m = d.visible.or(params.map(|p| p.m)).context("data.visible missing")?;
            prototype_dataset(m, d.rows.unwrap_or(2000), d.prototypes, d.density, d.flip, seed)?
        }
    };
    if let Some(p) = params {
        if p.m != data.cols {
            bail!("data has {} columns but the model has {} visible units", data.cols, p.m);
        }
    }
    Ok(data)
}

fn gmm_target(cfg: &ExperimentConfig) -> Result<GmmTarget> {
    let m = &cfg.model;
    if m.means.is_none() && m.weights.is_none() && m.component_scale.is_none() && m.prior_scale.is_none() {
        return Ok(GmmTarget::two_modes());
    }
    let means = m.means.clone().context("model.means missing")?;
    let weights = m.weights.clone().unwrap_or_else(|| vec![1.0; means.len()]);
    Ok(GmmTarget::new(means, m.component_scale.unwrap_or(0.5), weights, m.prior_scale.unwrap_or(30.0))?)
}

pub fn gmm_target_only(cfg: &ExperimentConfig) -> Result<GmmTarget> {
    if cfg.model.kind != ModelKind::Gmm {
        bail!("this command needs model.kind = \"gmm\"");
    }
    gmm_target(cfg)
}

/// Build the model. `betas` is the ladder the adaptive HMC schedule is fit on.
pub fn build(cfg: &ExperimentConfig, betas: &[f64]) -> Result<Built> {
    let m = &cfg.model;
    Ok(match m.kind {
        ModelKind::Rbm => {
            let params = rbm_params(cfg)?.context("model: an RBM needs `params` or `random`")?;
            let base = match m.base {
                BaseKind::Uniform => BaseBernoulli::uniform(params.m),
                BaseKind::Data => BaseBernoulli::from_data(&load_data(cfg, Some(&params))?, DEFAULT_CLIP),
            };
            let small = params.m.min(params.j);
            let model = RbmModel::new(params, base)?;
            Built::Rbm(if small <= CHEAP_ENUMERATION { model.with_exact_sampler()? } else { model })
        }
        ModelKind::Gmm => {
            let target = gmm_target(cfg)?;
            match m.step_size {
                Some(eps) => Built::Gmm(GmmModel::new(target, StepSchedule::constant(eps)), None),
                None => {
                    let sched = AdaptiveSchedule::build(&target, betas, &cfg.hmc.adapt_config(), cfg.seed)?;
                    Built::Gmm(GmmModel::new(target, sched.schedule.clone()), Some(sched))
                }
            }
        }
        ModelKind::Toy => Built::Toy(TwoStateModel::new(m.log_f.context("model.log_f missing")?, m.p0.unwrap_or(0.5))?),
        ModelKind::Flat => Built::Toy(TwoStateModel::new([0.5f64.ln(), 0.5f64.ln()], 0.5)?),
    })
}
