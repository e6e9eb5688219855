//! Experiment manifests: TOML files whose sections mirror the experiment
//! settings. Unknown keys are rejected so typos surface as errors.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use rts_core::estimators::Method;
use rts_core::ladder::{Prior, Spacing};
use rts_core::tempering::InitConfig;
use rts_core::tracker::TrainConfig;

/// Invalid manifest: bad syntax, unknown or missing fields, violated invariants.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Write a parameter file every this many trace records (0: final only).
    #[serde(default)]
    pub checkpoint_every: usize,
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub ladder: LadderSpec,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep_k: SweepSpec,
    #[serde(default)]
    pub hmc: HmcSpec,
}

fn default_methods() -> Vec<String> {
    vec!["rts".into()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rbm,
    Gmm,
    Toy,
    /// Two-state model with `f = p1`, so every `log Z_k` is zero.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    #[default]
    Data,
    Uniform,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomRbm {
    pub visible: usize,
    pub hidden: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    // rbm
    pub params: Option<PathBuf>,
    pub random: Option<RandomRbm>,
    #[serde(default)]
    pub base: BaseKind,
    // gmm; all-absent means the two-mode benchmark
    pub means: Option<Vec<Vec<f64>>>,
    pub component_scale: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub prior_scale: Option<f64>,
    /// Fixed HMC step size; absent means adaptive per-temperature steps.
    pub step_size: Option<f64>,
    // toy
    pub log_f: Option<[f64; 2]>,
    pub p0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Exact samples from the configured RBM.
    #[default]
    Model,
    Idx,
    Prototypes,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    pub threshold: f64,
    /// Row count to generate, or to keep from an IDX file.
    pub rows: Option<usize>,
    pub visible: Option<usize>,
    pub prototypes: usize,
    pub density: f64,
    pub flip: f64,
    /// Trailing rows held out for validation during training.
    pub val_rows: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            source: DataSource::Model,
            path: None,
            threshold: 0.5,
            rows: None,
            visible: None,
            prototypes: 6,
            density: 0.3,
            flip: 0.05,
            val_rows: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingKind {
    #[default]
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSpec {
    pub k: usize,
    pub spacing: SpacingKind,
    pub min_beta: f64,
    pub prior: PriorKind,
    pub lambda: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        LadderSpec { k: 100, spacing: SpacingKind::Uniform, min_beta: 0.01, prior: PriorKind::Uniform, lambda: 2.0 }
    }
}

impl LadderSpec {
    pub fn spacing(&self) -> Spacing {
        match self.spacing {
            SpacingKind::Uniform => Spacing::Uniform,
            SpacingKind::Geometric => Spacing::Geometric { min_beta: self.min_beta },
        }
    }

    pub fn prior(&self) -> Prior {
        match self.prior {
            PriorKind::Uniform => Prior::Uniform,
            PriorKind::Exponential => Prior::Exponential { lambda: self.lambda },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub chains: usize,
    pub sweeps: usize,
    pub init: InitConfig,
    /// Annealing temperatures; defaults to `sweeps`, which matches the
    /// tempered run's cost with the same number of chains.
    pub anneal_temps: Option<usize>,
    /// Pseudo-count added to every bin for TS.
    pub ts_smoothing: f64,
    pub mbar_max_iters: usize,
    pub mbar_tol: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            chains: 100,
            sweeps: 1000,
            init: InitConfig::default(),
            anneal_temps: None,
            ts_smoothing: 0.0,
            mbar_max_iters: 10_000,
            mbar_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub ks: Vec<usize>,
    pub bootstrap: usize,
    pub samples: usize,
    pub methods: Vec<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { ks: vec![20, 50, 100, 200], bootstrap: 200, samples: 10_000, methods: vec!["rts".into(), "ti_rb".into()] }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcSpec {
    pub batches: usize,
    pub batch_size: usize,
    pub gain: f64,
    pub initial_eps: f64,
    pub target_accept: f64,
    pub pilot_per_bin: usize,
}

impl Default for HmcSpec {
    fn default() -> Self {
        let d = rts_core::gaussian::AdaptConfig::default();
        HmcSpec {
            batches: d.tune.batches,
            batch_size: d.tune.batch_size,
            gain: d.tune.gain,
            initial_eps: d.tune.initial_eps,
            target_accept: d.tune.target_accept,
            pilot_per_bin: d.pilot_per_bin,
        }
    }
}

impl HmcSpec {
    pub fn adapt_config(&self) -> rts_core::gaussian::AdaptConfig {
        let mut c = rts_core::gaussian::AdaptConfig::default();
        c.tune.batches = self.batches;
        c.tune.batch_size = self.batch_size;
        c.tune.gain = self.gain;
        c.tune.initial_eps = self.initial_eps;
        c.tune.target_accept = self.target_accept;
        c.pilot_per_bin = self.pilot_per_bin;
        c
    }
}

pub fn parse_method(name: &str) -> Result<Method, ConfigError> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "rts" => Method::Rts,
        "ts" => Method::Ts,
        "ti_riemann" => Method::TiRiemann,
        "ti_trap" | "ti" => Method::TiTrap,
        "ti_rb" => Method::TiRb,
        "mbar" => Method::Mbar,
        "mbar_stoch" => Method::MbarStoch,
        "mixed_mle" => Method::MixedMle,
        "sd" => Method::Sd,
        "rsd" => Method::Rsd,
        "ais" => Method::Ais,
        "raise" => Method::Raise,
        other => return bad(format!("methods: unknown method `{other}`")),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn methods(&self) -> Result<Vec<Method>, ConfigError> {
        let mut out: Vec<Method> = Vec::new();
        for name in &self.methods {
            let m = parse_method(name)?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn sweep_methods(&self) -> Result<Vec<Method>, ConfigError> {
        let mut out = Vec::new();
        for name in &self.sweep_k.methods {
            match parse_method(name)? {
                m @ (Method::Rts | Method::TiRb) => out.push(m),
                // bin visits belong to the sampling ladder and do not carry over to a regridded one
                m => return bad(format!("sweep_k.methods: {m} needs per-bin counts, which do not survive regridding")),
            }
        }
        Ok(out)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.methods()?;
        if self.ladder.k < 2 {
            return bad(format!("ladder.k: K ≥ 2 required, got {}", self.ladder.k));
        }
        if self.ladder.spacing == SpacingKind::Geometric && (!(self.ladder.min_beta > 0.0 && self.ladder.min_beta < 1.0) || self.ladder.k < 3) {
            return bad("ladder: geometric spacing needs 0 < min_beta < 1 and K ≥ 3");
        }
        if self.budget.chains == 0 || self.budget.sweeps == 0 {
            return bad("budget: chains and sweeps must be positive");
        }
        if self.budget.init.sweeps_per_iter == 0 {
            return bad("budget.init.sweeps_per_iter must be positive");
        }
        if self.budget.anneal_temps.is_some_and(|t| t < 2) {
            return bad("budget.anneal_temps: need at least 2 temperatures");
        }
        if !(0.0..=1.0).contains(&self.data.threshold) {
            return bad("data.threshold must lie in [0, 1]");
        }
        if let Some(p) = &self.data.path {
            if !p.exists() {
                return bad(format!("data.path: {} does not exist", p.display()));
            }
        }
        if self.data.source == DataSource::Idx && self.data.path.is_none() {
            return bad("data.path is required when data.source = \"idx\"");
        }
        if self.sweep_k.ks.iter().any(|&k| k < 2) {
            return bad("sweep_k.ks: K ≥ 2 required");
        }
        if self.sweep_k.bootstrap < 2 || self.sweep_k.samples == 0 {
            return bad("sweep_k: need at least 2 bootstrap replicates and a positive sample size");
        }
        self.sweep_methods()?;
        self.train.validate().map_err(|e| ConfigError(format!("train: {e}")))?;
        let m = &self.model;
        match m.kind {
            ModelKind::Rbm => {
                match (&m.params, &m.random) {
                    (Some(_), Some(_)) => return bad("model: give either `params` or `random`, not both"),
                    (Some(p), None) if !p.exists() => return bad(format!("model.params: {} does not exist", p.display())),
                    _ => {}
                }
                if let Some(r) = &m.random {
                    if r.visible == 0 || r.hidden == 0 || !(r.scale >= 0.0) {
                        return bad("model.random: need positive sizes and a non-negative scale");
                    }
                }
            }
            ModelKind::Gmm => {
                if m.step_size.is_some_and(|e| !(e > 0.0)) {
                    return bad("model.step_size must be positive");
                }
            }
            ModelKind::Toy => {
                if m.log_f.is_none() {
                    return bad("model.log_f is required for the toy model");
                }
                if m.p0.is_some_and(|p| !(p > 0.0 && p < 1.0)) {
                    return bad("model.p0 must lie in (0, 1)");
                }
            }
            ModelKind::Flat => {}
        }
        Ok(())
    }
}
