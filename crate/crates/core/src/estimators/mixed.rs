//! Maximum-likelihood partition estimates from samples drawn under varying
//! `Ẑ` snapshots.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimators::{LogZEstimate, Method, SampleLog};
use crate::ladder::{beta_conditional_into, TemperatureLadder};
use crate::math::log_sum_exp;

struct Problem {
    log_r: Vec<f64>,
    /// Per snapshot: (fraction of samples, log Ẑ).
    groups: Vec<(f64, Vec<f64>)>,
    c_hat: Vec<f64>,
}

impl Problem {
    /// Objective per sample, its gradient and Hessian in the free coordinates
    /// `f_2..f_K` (`f_1 = 0`).
    fn eval(&self, f: &[f64], want_hess: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let k = f.len();
        let m = k - 1;
        let mut obj: f64 = (0..k).map(|j| f[j] * self.c_hat[j]).sum();
        let mut grad: Vec<f64> = self.c_hat[1..].to_vec();
        let mut hess = if want_hess { vec![0.0; m * m] } else { Vec::new() };
        let mut logits = vec![0.0; k];
        for (w, zhat) in &self.groups {
            for j in 0..k {
                logits[j] = self.log_r[j] + f[j] - zhat[j];
            }
            let lse = log_sum_exp(&logits);
            obj -= w * lse;
            let pi: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
            for a in 0..m {
                grad[a] -= w * pi[a + 1];
                if want_hess {
                    hess[a * m + a] -= w * pi[a + 1];
                    for b in 0..m {
                        hess[a * m + b] += w * pi[a + 1] * pi[b + 1];
                    }
                }
            }
        }
        (obj, grad, hess)
    }
}

/// Solve `A x = b` for symmetric positive definite `A` (row-major), adding a
/// ridge if the factorization breaks down.
fn cholesky_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        let mut l = vec![0.0; n * n];
        let mut ok = true;
        'outer: for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j] + if i == j { ridge } else { 0.0 };
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                if i == j {
                    if s <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        if ok {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let s: f64 = (0..i).map(|p| l[i * n + p] * y[p]).sum();
                y[i] = (b[i] - s) / l[i * n + i];
            }
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|p| l[p * n + i] * x[p]).sum();
                x[i] = (y[i] - s) / l[i * n + i];
            }
            return x;
        }
        ridge = if ridge == 0.0 { scale * 1e-12 } else { ridge * 10.0 };
    }
}

/// Maximize the Rao-Blackwellized likelihood
/// `Σ_i Σ_k q(β_k | x_i; Ẑ^(i)) log Z_k − Σ_i log Σ_k r_k Z_k / Ẑ^(i)_k`
/// over `log Z` with `log Z_1 = 0`.
///
/// Records carrying a `zhat_version` use that snapshot; the rest use the
/// ladder's `log Ẑ`. Missing conditionals are recomputed from `Δ` under the
/// record's snapshot. Non-convergence returns the last iterate with a warning.
pub fn mixed_zhat_mle(samples: &SampleLog, ladder: &TemperatureLadder, max_iters: usize, tol: f64) -> Result<LogZEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let k = ladder.len();
    let n = samples.len() as f64;
    let mut c_hat = vec![0.0; k];
    let mut by_snapshot: BTreeMap<Option<u32>, usize> = BTreeMap::new();
    let mut cond = vec![0.0; k];
    for r in &samples.records {
        let zhat = match r.zhat_version {
            Some(v) => samples
                .snapshots
                .get(v as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown snapshot {v}")))?,
            None => ladder.log_zhat(),
        };
        if zhat.len() != k {
            return Err(Error::InvalidArgument("snapshot length differs from ladder".into()));
        }
        *by_snapshot.entry(r.zhat_version).or_default() += 1;
        let q: &[f64] = match &r.conditional {
            Some(q) => q,
            None => {
                let mut l = ladder.clone();
                l.set_log_zhat(zhat.to_vec())?;
                beta_conditional_into(&l, r.delta, &mut cond);
                &cond
            }
        };
        for j in 0..k {
            c_hat[j] += q[j] / n;
        }
    }
    if !(c_hat[0] > 0.0) {
        return Err(Error::BaseNeverWeighted);
    }
    let empty: Vec<usize> = (1..k).filter(|&j| !(c_hat[j] > 0.0)).collect();
    if !empty.is_empty() {
        return Err(Error::EmptyBins(empty));
    }
    let groups = by_snapshot
        .into_iter()
        .map(|(v, count)| {
            let z = match v {
                Some(v) => samples.snapshots[v as usize].clone(),
                None => ladder.log_zhat().to_vec(),
            };
            (count as f64 / n, z)
        })
        .collect();
    let problem = Problem { log_r: ladder.log_r().to_vec(), groups, c_hat };

    // start from the closed form under the first snapshot
    let z0 = &problem.groups[0].1;
    let mut f: Vec<f64> = (0..k)
        .map(|j| z0[j] - z0[0] + problem.log_r[0] - problem.log_r[j] + problem.c_hat[j].ln() - problem.c_hat[0].ln())
        .collect();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=max_iters {
        iterations = it;
        let (obj, grad, hess) = problem.eval(&f, true);
        if grad.iter().all(|g| g.abs() < tol) {
            converged = true;
            break;
        }
        let neg: Vec<f64> = hess.iter().map(|h| -h).collect();
        let step = cholesky_solve(&neg, &grad);
        let slope: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = std::iter::once(0.0).chain((1..k).map(|j| f[j] + t * step[j - 1])).collect();
            let (o, _, _) = problem.eval(&trial, false);
            if o >= obj + 1e-4 * t * slope || t < 1e-12 {
                f = trial;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        let (_, grad, _) = problem.eval(&f, false);
        converged = grad.iter().all(|g| g.abs() < tol);
    }
    let mut est = LogZEstimate::new(Method::MixedMle, f, samples.len() as u64);
    if !converged {
        est.warnings.push(format!("not converged after {iterations} iterations"));
    }
    Ok(est)
}
