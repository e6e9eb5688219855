//! Binary restricted Boltzmann machines as tempered models.
//!
//! The tempered family interpolates the joint `f(v, h) = exp(vᵀc + vᵀWh + hᵀb)`
//! with the base `p1(v) 2^{−J}`, a product of Bernoullis on the visibles and
//! uniform hiddens, so both block conditionals stay closed-form at every β
//! and `Z_1 = 1`.

pub mod idx;
pub mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, logit, sigmoid, softplus};
use crate::model::TemperedModel;

pub use idx::{binarize, load_idx, parse_idx, prototype_dataset, BitDataset, IdxArray};
pub use io::{decode_rbm, encode_rbm, load_rbm, save_rbm};

/// Largest side that exact enumeration will attempt.
pub const MAX_ENUMERATION: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    /// Visible units.
    pub m: usize,
    /// Hidden units.
    pub j: usize,
    /// Row-major M×J.
    pub w: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
}

impl RbmParams {
    pub fn new(m: usize, j: usize, w: Vec<f64>, c: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = RbmParams { m, j, w, c, b };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(m: usize, j: usize) -> Self {
        RbmParams { m, j, w: vec![0.0; m * j], c: vec![0.0; m], b: vec![0.0; j] }
    }

    /// Entries i.i.d. `N(0, scale²)`.
    pub fn random(m: usize, j: usize, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, scale.abs()).expect("finite scale");
        let w = (0..m * j).map(|_| n.sample(&mut rng)).collect();
        let c = (0..m).map(|_| n.sample(&mut rng)).collect();
        let b = (0..j).map(|_| n.sample(&mut rng)).collect();
        RbmParams { m, j, w, c, b }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.m * self.j || self.c.len() != self.m || self.b.len() != self.j {
            return Err(Error::InvalidArgument(format!(
                "inconsistent RBM dimensions: M={}, J={}, |W|={}, |c|={}, |b|={}",
                self.m,
                self.j,
                self.w.len(),
                self.c.len(),
                self.b.len()
            )));
        }
        if self.w.iter().chain(&self.c).chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.j..(i + 1) * self.j]
    }

    /// `b + Wᵀv`.
    pub fn hidden_input(&self, v: &[u8], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0 {
                for (o, w) in out.iter_mut().zip(self.w_row(i)) {
                    *o += w;
                }
            }
        }
    }

    /// `c_i + (Wh)_i`.
    #[inline]
    pub fn visible_input(&self, i: usize, h: &[u8]) -> f64 {
        self.c[i] + self.w_row(i).iter().zip(h).map(|(w, &hj)| w * hj as f64).sum::<f64>()
    }

    /// `vᵀc + vᵀWh + hᵀb`.
    pub fn log_f(&self, v: &[u8], h: &[u8]) -> f64 {
        let mut e: f64 = self.b.iter().zip(h).filter(|(_, &x)| x != 0).map(|(b, _)| b).sum();
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0 {
                e += self.visible_input(i, h);
            }
        }
        e
    }

    /// `log Σ_h f(v, h) = vᵀc + Σ_j softplus(b_j + (Wᵀv)_j)`.
    pub fn free_energy(&self, v: &[u8]) -> f64 {
        let mut hin = vec![0.0; self.j];
        self.hidden_input(v, &mut hin);
        let vc: f64 = self.c.iter().zip(v).filter(|(_, &x)| x != 0).map(|(c, _)| c).sum();
        vc + hin.iter().map(|&a| softplus(a)).sum::<f64>()
    }

    /// Swap the roles of visibles and hiddens.
    pub fn transposed(&self) -> RbmParams {
        let mut w = vec![0.0; self.m * self.j];
        for i in 0..self.m {
            for k in 0..self.j {
                w[k * self.m + i] = self.w[i * self.j + k];
            }
        }
        RbmParams { m: self.j, j: self.m, w, c: self.b.clone(), b: self.c.clone() }
    }
}

/// Product-of-Bernoullis base over the visibles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseBernoulli {
    p: Vec<f64>,
    logit_p: Vec<f64>,
    /// `Σ_i log(1 − p_i)`.
    log_all_off: f64,
}

pub const DEFAULT_CLIP: f64 = 1e-4;

impl BaseBernoulli {
    /// Probabilities are clipped into `[clip, 1 − clip]`.
    pub fn new(p: Vec<f64>, clip: f64) -> Self {
        let p: Vec<f64> = p.into_iter().map(|x| x.clamp(clip, 1.0 - clip)).collect();
        let logit_p = p.iter().map(|&x| logit(x)).collect();
        let log_all_off = p.iter().map(|&x| (-x).ln_1p()).sum();
        BaseBernoulli { p, logit_p, log_all_off }
    }

    pub fn uniform(m: usize) -> Self {
        BaseBernoulli::new(vec![0.5; m], DEFAULT_CLIP)
    }

    /// Clipped column means.
    pub fn from_data(data: &BitDataset, clip: f64) -> Self {
        let n = data.rows.max(1) as f64;
        let mut p = vec![0.0; data.cols];
        for r in 0..data.rows {
            for (pi, &x) in p.iter_mut().zip(data.row(r)) {
                *pi += x as f64;
            }
        }
        BaseBernoulli::new(p.into_iter().map(|s| s / n).collect(), clip)
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn log_prob(&self, v: &[u8]) -> f64 {
        self.log_all_off + self.logit_p.iter().zip(v).filter(|(_, &x)| x != 0).map(|(l, _)| l).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RbmState {
    pub v: Vec<u8>,
    pub h: Vec<u8>,
}

/// An RBM paired with its tempering base.
#[derive(Debug, Clone)]
pub struct RbmModel {
    pub params: RbmParams,
    pub base: BaseBernoulli,
    exact: Option<ExactSampler>,
}

impl RbmModel {
    pub fn new(params: RbmParams, base: BaseBernoulli) -> Result<Self> {
        params.validate()?;
        if base.len() != params.m {
            return Err(Error::InvalidArgument(format!("base has {} units, RBM has {} visibles", base.len(), params.m)));
        }
        Ok(RbmModel { params, base, exact: None })
    }

    /// Enable exact target sampling by enumeration.
    pub fn with_exact_sampler(mut self) -> Result<Self> {
        self.exact = Some(ExactSampler::new(&self.params)?);
        Ok(self)
    }

    pub fn exact_sampler(&self) -> Option<&ExactSampler> {
        self.exact.as_ref()
    }

    /// Block-Gibbs sweep at `beta` using caller-provided scratch.
    pub fn sweep<R: Rng + ?Sized>(&self, x: &mut RbmState, beta: f64, scratch: &mut [f64], rng: &mut R) {
        let p = &self.params;
        p.hidden_input(&x.v, scratch);
        for (hj, &a) in x.h.iter_mut().zip(scratch.iter()) {
            *hj = (rng.random::<f64>() < sigmoid(beta * a)) as u8;
        }
        let off = 1.0 - beta;
        for i in 0..p.m {
            let a = beta * p.visible_input(i, &x.h) + off * self.base.logit_p[i];
            x.v[i] = (rng.random::<f64>() < sigmoid(a)) as u8;
        }
    }
}

impl TemperedModel for RbmModel {
    type State = RbmState;

    fn log_f(&self, x: &RbmState) -> f64 {
        self.params.log_f(&x.v, &x.h)
    }

    fn log_p1(&self, x: &RbmState) -> f64 {
        self.base.log_prob(&x.v) - self.params.j as f64 * std::f64::consts::LN_2
    }

    fn transition<R: Rng + ?Sized>(&self, x: &mut RbmState, beta: f64, rng: &mut R) {
        let mut scratch = vec![0.0; self.params.j];
        self.sweep(x, beta, &mut scratch, rng);
    }

    fn sample_p1<R: Rng + ?Sized>(&self, rng: &mut R) -> RbmState {
        let v = self.base.p.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
        let h = (0..self.params.j).map(|_| rng.random::<bool>() as u8).collect();
        RbmState { v, h }
    }

    fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<RbmState> {
        self.exact.as_ref().map(|s| s.sample(&self.params, rng))
    }
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// `log Σ_h exp(hᵀb + Σ_i softplus(c_i + (Wh)_i))` over the hidden side.
fn hidden_side_log_z(p: &RbmParams) -> f64 {
    let n = p.j;
    let total = 1u64 << n;
    let chunk = (total / 64).max(1);
    let starts: Vec<u64> = (0..total).step_by(chunk as usize).collect();
    let parts: Vec<f64> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + chunk).min(total);
            let terms = hidden_log_weights_range(p, s, e);
            log_sum_exp(&terms)
        })
        .collect();
    log_sum_exp(&parts)
}

/// Unnormalized log marginal of every hidden pattern with Gray-code index
/// in `[s, e)`, in that order.
fn hidden_log_weights_range(p: &RbmParams, s: u64, e: u64) -> Vec<f64> {
    let mut h = vec![0u8; p.j];
    let g = gray(s);
    for (k, hk) in h.iter_mut().enumerate() {
        *hk = ((g >> k) & 1) as u8;
    }
    let mut act: Vec<f64> = (0..p.m).map(|i| p.visible_input(i, &h)).collect();
    let mut hb: f64 = p.b.iter().zip(&h).filter(|(_, &x)| x != 0).map(|(b, _)| b).sum();
    let mut out = Vec::with_capacity((e - s) as usize);
    for idx in s..e {
        if idx > s {
            let flip = (gray(idx) ^ gray(idx - 1)).trailing_zeros() as usize;
            let sign = if h[flip] == 0 { 1.0 } else { -1.0 };
            h[flip] ^= 1;
            hb += sign * p.b[flip];
            for (i, a) in act.iter_mut().enumerate() {
                *a += sign * p.w[i * p.j + flip];
            }
        }
        out.push(hb + act.iter().map(|&a| softplus(a)).sum::<f64>());
    }
    out
}

/// Exact `log Z` by enumerating the smaller side.
pub fn rbm_exact_log_z(p: &RbmParams) -> Result<f64> {
    p.validate()?;
    let small = p.m.min(p.j);
    if small > MAX_ENUMERATION {
        return Err(Error::EnumerationInfeasible(small));
    }
    Ok(if p.j <= p.m { hidden_side_log_z(p) } else { hidden_side_log_z(&p.transposed()) })
}

/// `log Z` by enumerating the visible side regardless of size limits on the
/// hidden side (used to cross-check [`rbm_exact_log_z`]).
pub fn rbm_log_z_by_visible(p: &RbmParams) -> Result<f64> {
    if p.m > MAX_ENUMERATION {
        return Err(Error::EnumerationInfeasible(p.m));
    }
    Ok(hidden_side_log_z(&p.transposed()))
}

/// Mean over rows of `F(v) − log Z`.
pub fn data_log_likelihood(p: &RbmParams, log_z: f64, data: &BitDataset) -> f64 {
    let f: Vec<f64> = (0..data.rows).into_par_iter().map(|r| p.free_energy(data.row(r))).collect();
    f.iter().sum::<f64>() / data.rows as f64 - log_z
}

/// Exact sampler from `f / Z`: draw the smaller side from its enumerated
/// marginal, then the other side from its factorized conditional.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    /// Whether the enumerated side is the hidden one.
    hidden_side: bool,
    /// Cumulative probabilities over Gray-code indices.
    cdf: Vec<f64>,
    n_bits: usize,
}

impl ExactSampler {
    pub fn new(p: &RbmParams) -> Result<Self> {
        let small = p.m.min(p.j);
        if small > 20 {
            return Err(Error::EnumerationInfeasible(small));
        }
        let hidden_side = p.j <= p.m;
        let q = if hidden_side { p.clone() } else { p.transposed() };
        let lw = hidden_log_weights_range(&q, 0, 1u64 << q.j);
        let lz = log_sum_exp(&lw);
        let mut acc = 0.0;
        let cdf = lw
            .iter()
            .map(|l| {
                acc += (l - lz).exp();
                acc
            })
            .collect();
        Ok(ExactSampler { hidden_side, cdf, n_bits: q.j })
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: &RbmParams, rng: &mut R) -> RbmState {
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let idx = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let g = gray(idx as u64);
        let small: Vec<u8> = (0..self.n_bits).map(|k| ((g >> k) & 1) as u8).collect();
        if self.hidden_side {
            let v = (0..p.m).map(|i| (rng.random::<f64>() < sigmoid(p.visible_input(i, &small))) as u8).collect();
            RbmState { v, h: small }
        } else {
            let mut hin = vec![0.0; p.j];
            p.hidden_input(&small, &mut hin);
            let h = hin.iter().map(|&a| (rng.random::<f64>() < sigmoid(a)) as u8).collect();
            RbmState { v: small, h }
        }
    }

    /// `n` exact visible samples as a dataset.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, p: &RbmParams, n: usize, rng: &mut R) -> BitDataset {
        let mut bits = Vec::with_capacity(n * p.m);
        for _ in 0..n {
            bits.extend(self.sample(p, rng).v);
        }
        BitDataset { rows: n, cols: p.m, bits }
    }
}

#[cfg(test)]
mod tests;
