//! A two-state model small enough to enumerate: `x ∈ {0, 1}`, arbitrary
//! unnormalized target weights and a Bernoulli base. Its transition is an
//! exact draw from the tempered conditional, so simulated tempering on it is
//! an exact Gibbs sampler.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ladder::TemperatureLadder;
use crate::math::log_sum_exp;
use crate::model::TemperedModel;

#[derive(Debug, Clone)]
pub struct TwoStateModel {
    log_f: [f64; 2],
    log_p1: [f64; 2],
}

impl TwoStateModel {
    /// `log_f` are the target log weights of states 0 and 1; `p0` is the base
    /// probability of state 0.
    pub fn new(log_f: [f64; 2], p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::InvalidArgument(format!("base probability {p0} not in (0, 1)")));
        }
        Ok(TwoStateModel { log_f, log_p1: [p0.ln(), (1.0 - p0).ln()] })
    }

    /// Target weights (1, 2) over a fair base: `Z_K = 3`.
    pub fn log3() -> Self {
        Self::new([0.0, 2f64.ln()], 0.5).unwrap()
    }

    /// `log Z(β) = log Σ_x f(x)^β p1(x)^(1−β)`.
    pub fn exact_log_z_at(&self, beta: f64) -> f64 {
        let t: Vec<f64> = (0..2).map(|x| beta * self.log_f[x] + (1.0 - beta) * self.log_p1[x]).collect();
        log_sum_exp(&t)
    }

    pub fn exact_log_z(&self, ladder: &TemperatureLadder) -> Vec<f64> {
        ladder.betas().iter().map(|&b| self.exact_log_z_at(b)).collect()
    }

    fn prob_one(&self, beta: f64) -> f64 {
        let a = beta * self.log_f[0] + (1.0 - beta) * self.log_p1[0];
        let b = beta * self.log_f[1] + (1.0 - beta) * self.log_p1[1];
        crate::math::sigmoid(b - a)
    }
}

impl TemperedModel for TwoStateModel {
    type State = u8;

    fn log_f(&self, x: &u8) -> f64 {
        self.log_f[*x as usize]
    }

    fn log_p1(&self, x: &u8) -> f64 {
        self.log_p1[*x as usize]
    }

    fn transition<R: Rng + ?Sized>(&self, x: &mut u8, beta: f64, rng: &mut R) {
        *x = u8::from(rng.random::<f64>() < self.prob_one(beta));
    }

    fn sample_p1<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        u8::from(rng.random::<f64>() < self.log_p1[1].exp())
    }

    fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u8> {
        Some(u8::from(rng.random::<f64>() < self.prob_one(1.0)))
    }
}
