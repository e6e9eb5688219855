use super::*;
use crate::rng::chain_rng;

fn bits(n: usize, code: usize) -> Vec<u8> {
    (0..n).map(|k| ((code >> k) & 1) as u8).collect()
}

/// Energy by an explicit double loop over units.
fn naive_log_f(p: &RbmParams, v: &[u8], h: &[u8]) -> f64 {
    let mut e = 0.0;
    for i in 0..p.m {
        e += v[i] as f64 * p.c[i];
        for k in 0..p.j {
            e += v[i] as f64 * p.w[i * p.j + k] * h[k] as f64;
        }
    }
    for k in 0..p.j {
        e += h[k] as f64 * p.b[k];
    }
    e
}

fn brute_log_z(p: &RbmParams) -> f64 {
    let mut terms = Vec::new();
    for a in 0..1 << p.m {
        for b in 0..1 << p.j {
            terms.push(naive_log_f(p, &bits(p.m, a), &bits(p.j, b)));
        }
    }
    log_sum_exp(&terms)
}

fn naive_log_p1(base: &BaseBernoulli, v: &[u8], j: usize) -> f64 {
    let mut s = -(j as f64) * 2f64.ln();
    for (p, &x) in base.probs().iter().zip(v) {
        s += if x == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    s
}

#[test]
fn delta_examples() {
    let m = RbmModel::new(RbmParams::zeros(5, 3), BaseBernoulli::uniform(5)).unwrap();
    let x = RbmState { v: vec![1, 0, 1, 1, 0], h: vec![0, 1, 1] };
    assert!((m.delta(&x) - 8.0 * 2f64.ln()).abs() < 1e-12);

    let base = BaseBernoulli::new(vec![0.2, 0.7, 0.4, 0.9], DEFAULT_CLIP);
    let m = RbmModel::new(RbmParams::random(4, 3, 42, 1.0), base.clone()).unwrap();
    let zero = RbmState { v: vec![0; 4], h: vec![0; 3] };
    let expect = -[0.8f64, 0.3, 0.6, 0.1].iter().map(|q| q.ln()).sum::<f64>() + 3.0 * 2f64.ln();
    assert!((m.delta(&zero) - expect).abs() < 1e-12);
}

#[test]
fn delta_matches_naive_on_all_states() {
    let base = BaseBernoulli::new(vec![0.3, 0.55, 0.1, 0.8], DEFAULT_CLIP);
    let p = RbmParams::random(4, 3, 42, 1.0);
    let m = RbmModel::new(p.clone(), base.clone()).unwrap();
    for a in 0..16 {
        for b in 0..8 {
            let x = RbmState { v: bits(4, a), h: bits(3, b) };
            let want = naive_log_f(&p, &x.v, &x.h) - naive_log_p1(&base, &x.v, 3);
            assert!((m.delta(&x) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_log_z_examples() {
    let z = rbm_exact_log_z(&RbmParams::zeros(4, 3)).unwrap();
    assert!((z - 7.0 * 2f64.ln()).abs() < 1e-12);
    assert!((z - 4.852030).abs() < 1e-6);
    for w in [0.0, 1.3, -2.0] {
        let p = RbmParams::new(1, 1, vec![w], vec![0.0], vec![0.0]).unwrap();
        assert!((rbm_exact_log_z(&p).unwrap() - (3.0 + w.exp()).ln()).abs() < 1e-12);
    }
    let p = RbmParams::random(4, 3, 42, 1.0);
    assert!((rbm_exact_log_z(&p).unwrap() - brute_log_z(&p)).abs() < 1e-10);
    let q = RbmParams::random(3, 5, 7, 1.5);
    assert!((rbm_exact_log_z(&q).unwrap() - brute_log_z(&q)).abs() < 1e-10);
}

#[test]
fn both_sides_agree() {
    for (m, j, seed) in [(6, 9, 1), (12, 4, 2), (10, 10, 3)] {
        let p = RbmParams::random(m, j, seed, 0.8);
        let a = hidden_side_log_z(&p);
        let b = rbm_log_z_by_visible(&p).unwrap();
        assert!((a - b).abs() < 1e-10, "{m}x{j}: {a} vs {b}");
    }
}

#[test]
fn enumeration_limit() {
    let p = RbmParams::zeros(26, 26);
    assert!(matches!(rbm_exact_log_z(&p), Err(Error::EnumerationInfeasible(26))));
}

#[test]
fn free_energy_and_likelihood() {
    let p = RbmParams::zeros(4, 3);
    assert!((p.free_energy(&[1, 0, 1, 0]) - 3.0 * 2f64.ln()).abs() < 1e-12);
    let all = BitDataset::new(16, 4, (0..16).flat_map(|a| bits(4, a)).collect()).unwrap();
    let ll = data_log_likelihood(&p, rbm_exact_log_z(&p).unwrap(), &all);
    assert!((ll + 4.0 * 2f64.ln()).abs() < 1e-12);

    let p = RbmParams::random(4, 3, 42, 1.0);
    let lz = rbm_exact_log_z(&p).unwrap();
    let total: f64 = (0..16).map(|a| (p.free_energy(&bits(4, a)) - lz).exp()).sum();
    assert!((total - 1.0).abs() < 1e-10);

    let target = [1u8, 0, 1, 1];
    let c = target.iter().map(|&t| if t == 1 { 40.0 } else { -40.0 }).collect();
    let p = RbmParams::new(4, 2, vec![0.0; 8], c, vec![0.0; 2]).unwrap();
    let ll = data_log_likelihood(&p, rbm_exact_log_z(&p).unwrap(), &BitDataset::new(1, 4, target.to_vec()).unwrap());
    assert!(ll <= 0.0 && ll > -1e-12);
}

#[test]
fn base_from_data_clips() {
    let d = BitDataset::new(3, 2, vec![0; 6]).unwrap();
    assert_eq!(BaseBernoulli::from_data(&d, DEFAULT_CLIP).probs(), &[1e-4, 1e-4]);
    let d = BitDataset::new(4, 2, vec![1, 0, 1, 1, 0, 1, 1, 0]).unwrap();
    assert_eq!(BaseBernoulli::from_data(&d, DEFAULT_CLIP).probs(), &[0.75, 0.5]);
}

#[test]
fn zero_beta_samples_the_base() {
    let probs = vec![0.1, 0.5, 0.85, 0.3];
    let m = RbmModel::new(RbmParams::random(4, 3, 42, 2.0), BaseBernoulli::new(probs.clone(), DEFAULT_CLIP)).unwrap();
    let mut rng = chain_rng(5, 0);
    let mut x = m.sample_p1(&mut rng);
    let n = 200_000;
    let mut sv = [0.0; 4];
    let mut sh = [0.0; 3];
    for _ in 0..n {
        m.transition(&mut x, 0.0, &mut rng);
        for i in 0..4 {
            sv[i] += x.v[i] as f64;
        }
        for k in 0..3 {
            sh[k] += x.h[k] as f64;
        }
    }
    for i in 0..4 {
        let se = (probs[i] * (1.0 - probs[i]) / n as f64).sqrt();
        assert!((sv[i] / n as f64 - probs[i]).abs() < 3.0 * se);
    }
    for k in 0..3 {
        assert!((sh[k] / n as f64 - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }
}

/// Enumerated law of the tempered joint on a tiny RBM.
fn tempered_law(m: &RbmModel, beta: f64) -> Vec<f64> {
    let (nm, nj) = (m.params.m, m.params.j);
    let lw: Vec<f64> = (0..1usize << (nm + nj))
        .map(|s| {
            let x = RbmState { v: bits(nm, s & ((1 << nm) - 1)), h: bits(nj, s >> nm) };
            beta * m.log_f(&x) + (1.0 - beta) * m.log_p1(&x)
        })
        .collect();
    let lz = log_sum_exp(&lw);
    lw.iter().map(|l| (l - lz).exp()).collect()
}

fn state_code(x: &RbmState) -> usize {
    let nm = x.v.len();
    x.v.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>()
        + x.h.iter().enumerate().map(|(k, &b)| (b as usize) << (nm + k)).sum::<usize>()
}

#[test]
fn half_temperature_gibbs_matches_enumeration() {
    let m = RbmModel::new(RbmParams::random(2, 2, 11, 1.5), BaseBernoulli::new(vec![0.3, 0.6], DEFAULT_CLIP)).unwrap();
    let law = tempered_law(&m, 0.5);
    let mut rng = chain_rng(21, 0);
    let mut x = m.sample_p1(&mut rng);
    let (n_batches, per) = (100, 10_000);
    let mut batch = vec![vec![0.0; 16]; n_batches];
    for b in batch.iter_mut() {
        for _ in 0..per {
            m.transition(&mut x, 0.5, &mut rng);
            b[state_code(&x)] += 1.0 / per as f64;
        }
    }
    for s in 0..16 {
        let col: Vec<f64> = batch.iter().map(|b| b[s]).collect();
        let (mean, var) = crate::math::mean_var(&col);
        let se = (var / n_batches as f64).sqrt();
        assert!((mean - law[s]).abs() < 3.0 * se.max(1e-4), "state {s}: {mean} vs {}", law[s]);
    }
}

#[test]
fn exact_sampler_matches_target() {
    for (mm, jj) in [(3, 2), (2, 3)] {
        let m = RbmModel::new(RbmParams::random(mm, jj, 4, 1.0), BaseBernoulli::uniform(mm)).unwrap().with_exact_sampler().unwrap();
        let law = tempered_law(&m, 1.0);
        let mut rng = chain_rng(8, 1);
        let n = 200_000;
        let mut freq = vec![0.0; law.len()];
        for _ in 0..n {
            freq[state_code(&m.sample_target(&mut rng).unwrap())] += 1.0 / n as f64;
        }
        for s in 0..law.len() {
            let se = (law[s] * (1.0 - law[s]) / n as f64).sqrt();
            assert!((freq[s] - law[s]).abs() < 4.0 * se.max(1e-6), "{mm}x{jj} state {s}");
        }
    }
}

#[test]
fn transposition_preserves_energy() {
    let p = RbmParams::random(3, 4, 9, 1.0);
    let t = p.transposed();
    let (v, h) = (vec![1, 0, 1], vec![0, 1, 1, 1]);
    assert!((p.log_f(&v, &h) - t.log_f(&h, &v)).abs() < 1e-12);
}
