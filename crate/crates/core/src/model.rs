//! The contract a target distribution must satisfy to be tempered.

use rand::Rng;

use crate::error::{Error, Result};

/// An unnormalized target `f` paired with a normalized, easy-to-sample base
/// `p1`, together with Markov kernels for every tempered density
/// `f(x)^β p1(x)^(1-β)`.
///
/// Implementations are shared read-only across chains; all mutable sampler
/// state lives in the chain.
pub trait TemperedModel: Sync {
    type State: Clone + Send + Sync;

    fn log_f(&self, x: &Self::State) -> f64;

    fn log_p1(&self, x: &Self::State) -> f64;

    /// `Δ_x = log f(x) − log p1(x)`.
    fn delta(&self, x: &Self::State) -> f64 {
        self.log_f(x) - self.log_p1(x)
    }

    /// One Markov transition leaving `f^β p1^(1-β)` invariant.
    fn transition<R: Rng + ?Sized>(&self, x: &mut Self::State, beta: f64, rng: &mut R);

    /// Exact draw from the base distribution.
    fn sample_p1<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Exact draw from the normalized target `f / Z`, when the model can
    /// provide one (needed to start reverse annealing).
    fn sample_target<R: Rng + ?Sized>(&self, _rng: &mut R) -> Option<Self::State> {
        None
    }
}

/// `β log f(x) + (1 − β) log p1(x)`, rejecting states where either term is
/// not finite.
pub fn tempered_log_density<M: TemperedModel>(model: &M, x: &M::State, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    let lf = model.log_f(x);
    let lp = model.log_p1(x);
    if !lf.is_finite() || !lp.is_finite() {
        return Err(Error::InvalidState(format!("log f = {lf}, log p1 = {lp}")));
    }
    Ok(beta * (lf - lp) + lp)
}
