//! Thermodynamic integration of `d log Z / dβ = E[Δ | β]` along the ladder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{LogZEstimate, Method};
use crate::ladder::TemperatureLadder;
use crate::tempering::RaoBlackwellStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiRule {
    Riemann,
    #[default]
    Trapezoid,
}

/// Fill `None` entries by linear interpolation in β; ends are held flat.
/// Returns the filled vector and the indices that were imputed.
pub fn fill_gaps(betas: &[f64], values: &[Option<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    if known.is_empty() {
        return Err(Error::AllBinsEmpty);
    }
    let mut out = vec![0.0; values.len()];
    let mut imputed = Vec::new();
    for i in 0..values.len() {
        if let Some(v) = values[i] {
            out[i] = v;
            continue;
        }
        imputed.push(i);
        let right = known.iter().position(|&j| j > i);
        out[i] = match right {
            None => values[*known.last().unwrap()].unwrap(),
            Some(0) => values[known[0]].unwrap(),
            Some(p) => {
                let (a, b) = (known[p - 1], known[p]);
                let t = (betas[i] - betas[a]) / (betas[b] - betas[a]);
                values[a].unwrap() * (1.0 - t) + values[b].unwrap() * t
            }
        };
    }
    Ok((out, imputed))
}

/// Cumulative integral of `grad` over `betas`, starting at 0.
pub fn integrate(betas: &[f64], grad: &[f64], rule: TiRule) -> Vec<f64> {
    let mut out = Vec::with_capacity(betas.len());
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..betas.len() {
        let h = betas[k] - betas[k - 1];
        acc += match rule {
            TiRule::Riemann => h * grad[k],
            TiRule::Trapezoid => 0.5 * h * (grad[k] + grad[k - 1]),
        };
        out.push(acc);
    }
    out
}

fn finish(method: Method, ladder: &TemperatureLadder, grad: &[Option<f64>], rule: TiRule, n: u64) -> Result<LogZEstimate> {
    let (g, imputed) = fill_gaps(ladder.betas(), grad)?;
    let mut est = LogZEstimate::new(method, integrate(ladder.betas(), &g, rule), n);
    if !imputed.is_empty() {
        est.warnings.push(format!("imputed gradient in empty bins {imputed:?}"));
    }
    Ok(est)
}

/// Within-bin means of `Δ` by sampled index, integrated along the ladder.
pub fn ti(ladder: &TemperatureLadder, stats: &RaoBlackwellStats, rule: TiRule) -> Result<LogZEstimate> {
    let grad: Vec<Option<f64>> = stats
        .raw_counts
        .iter()
        .zip(&stats.delta_bin_sum)
        .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
        .collect();
    let method = match rule {
        TiRule::Riemann => Method::TiRiemann,
        TiRule::Trapezoid => Method::TiTrap,
    };
    finish(method, ladder, &grad, rule, stats.n_samples)
}

/// Gradient `Σ_i q(β_k|x_i) Δ_i / Σ_i q(β_k|x_i)` at every rung, trapezoid rule.
pub fn ti_rb(ladder: &TemperatureLadder, stats: &RaoBlackwellStats) -> Result<LogZEstimate> {
    let n = stats.n_samples as f64;
    let grad: Vec<Option<f64>> = stats
        .c_hat
        .iter()
        .zip(&stats.delta_weighted)
        .map(|(&c, &d)| (c > 0.0 && n > 0.0).then(|| d / (n * c)))
        .collect();
    finish(Method::TiRb, ladder, &grad, TiRule::Trapezoid, stats.n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_stats(k: usize, c: f64) -> RaoBlackwellStats {
        let mut s = RaoBlackwellStats::new(k);
        let cond = vec![1.0 / k as f64; k];
        for j in 0..k {
            s.record(j, c, &cond, j);
        }
        s
    }

    #[test]
    fn constant_gradient_integrates_exactly() {
        let l = TemperatureLadder::uniform(7).unwrap();
        let s = const_stats(7, 2.5);
        for rule in [TiRule::Riemann, TiRule::Trapezoid] {
            assert!((ti(&l, &s, rule).unwrap().log_z_target() - 2.5).abs() < 1e-14);
        }
        assert!((ti_rb(&l, &s).unwrap().log_z_target() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn linear_gradient_quadrature() {
        // g(β) = 3β + 1 integrates to 2.5 on [0, 1]
        let k = 11;
        let betas: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        let g: Vec<f64> = betas.iter().map(|b| 3.0 * b + 1.0).collect();
        let trap = integrate(&betas, &g, TiRule::Trapezoid);
        assert!((trap[k - 1] - 2.5).abs() < 1e-14);
        let riem = integrate(&betas, &g, TiRule::Riemann);
        let h = 0.1;
        // right sum overshoots by h/2 times the total rise of g
        assert!((riem[k - 1] - 2.5 - 0.5 * h * 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_ti_rb() {
        let l = TemperatureLadder::uniform(4).unwrap();
        let mut s = RaoBlackwellStats::new(4);
        s.record(0, -1.75, &[0.1, 0.2, 0.3, 0.4], 2);
        let est = ti_rb(&l, &s).unwrap();
        assert!((est.log_z_target() + 1.75).abs() < 1e-14);
        assert_eq!(est.log_z[0], 0.0);
    }

    #[test]
    fn point_mass_conditionals_make_ti_rb_match_trapezoid() {
        let l = TemperatureLadder::uniform(5).unwrap();
        let mut s = RaoBlackwellStats::new(5);
        let deltas = [0.3, -1.2, 2.0, 0.7, 1.1, -0.4, 3.3, 0.9, 0.0, 1.5];
        for (i, &d) in deltas.iter().enumerate() {
            let k = i % 5;
            let mut cond = vec![0.0; 5];
            cond[k] = 1.0;
            s.record(k, d, &cond, k);
        }
        let a = ti(&l, &s, TiRule::Trapezoid).unwrap();
        let b = ti_rb(&l, &s).unwrap();
        for (x, y) in a.log_z.iter().zip(&b.log_z) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gaps_are_interpolated() {
        let betas = [0.0, 0.25, 0.5, 1.0];
        let (v, imp) = fill_gaps(&betas, &[None, Some(1.0), None, Some(3.0)]).unwrap();
        assert_eq!(imp, vec![0, 2]);
        assert_eq!(v[0], 1.0);
        assert!((v[2] - (1.0 + 2.0 * (0.25 / 0.75))).abs() < 1e-15);
        assert!(matches!(fill_gaps(&betas, &[None; 4]), Err(Error::AllBinsEmpty)));
    }
}
