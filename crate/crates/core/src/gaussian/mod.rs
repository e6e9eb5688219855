//! Gaussian-mixture targets with analytic partition functions, sampled by
//! Hamiltonian Monte Carlo with per-temperature step sizes.

pub mod adapt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::TemperedModel;

pub use adapt::{
    eps_opt, fit_accept_model, pilot_accept_records, tune_endpoint_stepsizes, AcceptRecord, AdaptConfig,
    AdaptiveSchedule, EndpointTuning, HmcAcceptModel, TuneConfig, TARGET_ACCEPT,
};

pub const LEAPFROG_STEPS: usize = 10;

/// Mixture of unnormalized isotropic Gaussian kernels tempered against a
/// zero-mean isotropic Gaussian base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmTarget {
    pub means: Vec<Vec<f64>>,
    /// Kernel variance σ².
    pub component_scale: f64,
    pub weights: Vec<f64>,
    /// Base variance s².
    pub prior_scale: f64,
}

impl GmmTarget {
    pub fn new(means: Vec<Vec<f64>>, component_scale: f64, weights: Vec<f64>, prior_scale: f64) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::InvalidArgument("need one weight per mean".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidArgument("means must share a positive dimension".into()));
        }
        if !(component_scale > 0.0) || !(prior_scale > 0.0) || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("variances and weights must be positive".into()));
        }
        Ok(GmmTarget { means, component_scale, weights, prior_scale })
    }

    /// Two 10-d kernels with variance 0.5 at ±2.5 along the first axis,
    /// base variance 30.
    pub fn two_modes() -> Self {
        let mut a = vec![0.0; 10];
        let mut b = vec![0.0; 10];
        a[0] = -2.5;
        b[0] = 2.5;
        GmmTarget::new(vec![a, b], 0.5, vec![1.0, 1.0], 30.0).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log Σ_m w_m exp(−‖x − μ_m‖² / 2σ²)`.
    pub fn log_f(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.weights)
            .map(|(mu, w)| w.ln() - sq_dist(x, mu) / (2.0 * self.component_scale))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn grad_log_f(&self, x: &[f64], out: &mut [f64]) {
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.weights)
            .map(|(mu, w)| w.ln() - sq_dist(x, mu) / (2.0 * self.component_scale))
            .collect();
        let lse = log_sum_exp(&terms);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (mu, t) in self.means.iter().zip(&terms) {
            let r = (t - lse).exp();
            for ((o, xi), mi) in out.iter_mut().zip(x).zip(mu) {
                *o -= r * (xi - mi) / self.component_scale;
            }
        }
    }

    pub fn log_p1(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -x.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.prior_scale)
            - 0.5 * d * (2.0 * std::f64::consts::PI * self.prior_scale).ln()
    }

    /// `log Σ_m w_m + (d/2) log 2πσ²`.
    pub fn analytic_log_z(&self) -> f64 {
        self.weights.iter().sum::<f64>().ln()
            + 0.5 * self.dim() as f64 * (2.0 * std::f64::consts::PI * self.component_scale).ln()
    }

    /// `β log f + (1 − β) log p1`.
    pub fn tempered_log_density(&self, x: &[f64], beta: f64) -> f64 {
        beta * self.log_f(x) + (1.0 - beta) * self.log_p1(x)
    }

    pub fn tempered_grad(&self, x: &[f64], beta: f64, out: &mut [f64]) {
        self.grad_log_f(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = beta * *o - (1.0 - beta) * xi / self.prior_scale;
        }
    }

    /// Exact draw from `f / Z`, which is the normalized mixture.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        let probs: Vec<f64> = self.weights.iter().map(|w| w / total).collect();
        let m = crate::ladder::sample_index(&probs, rng);
        let s = self.component_scale.sqrt();
        self.means[m].iter().map(|mu| mu + s * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `n_steps` leapfrog steps of size `eps` for the Hamiltonian with potential
/// `−log q`, where `grad` writes `∇ log q`.
pub fn leapfrog<G: FnMut(&[f64], &mut [f64])>(mut grad: G, x: &mut [f64], p: &mut [f64], eps: f64, n_steps: usize) {
    let mut g = vec![0.0; x.len()];
    grad(x, &mut g);
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * eps * gi;
        }
        for (xi, pi) in x.iter_mut().zip(p.iter()) {
            *xi += eps * pi;
        }
        grad(x, &mut g);
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += 0.5 * eps * gi;
        }
    }
}

/// One HMC proposal at inverse temperature `beta` with fresh standard normal
/// momentum. Returns whether it was accepted; non-finite energies reject.
pub fn hmc_step<R: Rng + ?Sized>(target: &GmmTarget, x: &mut Vec<f64>, beta: f64, eps: f64, n_steps: usize, rng: &mut R) -> bool {
    let mut p: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let h0 = -target.tempered_log_density(x, beta) + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let mut y = x.clone();
    leapfrog(|z, g| target.tempered_grad(z, beta, g), &mut y, &mut p, eps, n_steps);
    let h1 = -target.tempered_log_density(&y, beta) + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let log_u: f64 = rng.random::<f64>().ln();
    let accept = h1.is_finite() && h0.is_finite() && log_u < h0 - h1;
    if accept {
        *x = y;
    }
    accept
}

/// Step size per inverse temperature, looked up by linear interpolation in β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub betas: Vec<f64>,
    pub eps: Vec<f64>,
}

impl StepSchedule {
    pub fn constant(eps: f64) -> Self {
        StepSchedule { betas: vec![0.0, 1.0], eps: vec![eps, eps] }
    }

    pub fn at(&self, beta: f64) -> f64 {
        crate::ladder::interp(&self.betas, &self.eps, beta)
    }
}

/// The mixture target as a tempered model driven by HMC.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub target: GmmTarget,
    pub schedule: StepSchedule,
    pub n_leapfrog: usize,
}

impl GmmModel {
    pub fn new(target: GmmTarget, schedule: StepSchedule) -> Self {
        GmmModel { target, schedule, n_leapfrog: LEAPFROG_STEPS }
    }
}

impl TemperedModel for GmmModel {
    type State = Vec<f64>;

    fn log_f(&self, x: &Vec<f64>) -> f64 {
        self.target.log_f(x)
    }

    fn log_p1(&self, x: &Vec<f64>) -> f64 {
        self.target.log_p1(x)
    }

    fn transition<R: Rng + ?Sized>(&self, x: &mut Vec<f64>, beta: f64, rng: &mut R) {
        hmc_step(&self.target, x, beta, self.schedule.at(beta), self.n_leapfrog, rng);
    }

    fn sample_p1<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let s = self.target.prior_scale.sqrt();
        (0..self.target.dim()).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        Some(self.target.sample_exact(rng))
    }
}
