use super::*;
use crate::estimators::rts;
use crate::model::TemperedModel;
use crate::rbm::rbm_exact_log_z;
use crate::rng::chain_rng;
use crate::tempering::gibbs_sweep;

fn bits(n: usize, code: usize) -> Vec<u8> {
    (0..n).map(|k| ((code >> k) & 1) as u8).collect()
}

fn stats_with(c: Vec<f64>) -> RaoBlackwellStats {
    let mut s = RaoBlackwellStats::new(c.len());
    s.c_hat = c;
    s.n_samples = 1;
    s
}

fn ladder4() -> TemperatureLadder {
    let mut l = TemperatureLadder::build(4, Spacing::Uniform, Prior::Exponential { lambda: 2.0 }).unwrap();
    l.set_log_zhat(vec![0.0, 0.3, 0.9, 1.4]).unwrap();
    l
}

#[test]
fn full_step_is_rts() {
    let mut l = ladder4();
    let s = stats_with(vec![0.1, 0.2, 0.3, 0.4]);
    let want = rts(&l, &s).unwrap().log_z;
    assert_eq!(smoothed_zhat_update(&mut l, &s, 1.0), ZhatUpdate::Applied);
    for (a, b) in l.log_zhat().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn smoothing_is_a_fraction_of_the_correction() {
    let l0 = ladder4();
    let s = stats_with(vec![0.1, 0.2, 0.3, 0.4]);
    let full = rts(&l0, &s).unwrap().log_z;
    let mut l = l0.clone();
    smoothed_zhat_update(&mut l, &s, 0.0);
    assert_eq!(l.log_zhat(), l0.log_zhat());
    smoothed_zhat_update(&mut l, &s, 0.2);
    smoothed_zhat_update(&mut l, &s, 0.2);
    for k in 0..4 {
        let corr = full[k] - l0.log_zhat()[k];
        assert!((l.log_zhat()[k] - l0.log_zhat()[k] - 0.4 * corr).abs() < 1e-12);
    }
    let mut l = l0.clone();
    smoothed_zhat_update(&mut l, &stats_with(l0.prior()), 0.3);
    for (a, b) in l.log_zhat().iter().zip(l0.log_zhat()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn unweighted_bins_are_flagged() {
    let mut l = ladder4();
    assert_eq!(smoothed_zhat_update(&mut l, &stats_with(vec![0.0, 0.5, 0.5, 0.0]), 0.2), ZhatUpdate::SkippedBase);
    assert_eq!(smoothed_zhat_update(&mut l, &stats_with(vec![0.5, 0.5, 0.0, 0.0]), 0.2), ZhatUpdate::Partial(vec![2, 3]));
}

fn pool_after_sweeps(model: &RbmModel, ladder: &TemperatureLadder, n: usize, sweeps: usize, seed: u64) -> ChainPool<RbmState> {
    let mut pool = ChainPool::new(model, ladder.len(), n, seed);
    let mut s = RaoBlackwellStats::new(ladder.len());
    for c in pool.chains_mut() {
        for _ in 0..sweeps {
            gibbs_sweep(model, ladder, c, &mut s);
        }
    }
    pool
}

#[test]
fn equal_conditionals_give_plain_pcd() {
    // zero parameters and a uniform base make Δ constant, so every chain has
    // the same conditional
    let p = RbmParams::zeros(4, 3);
    let model = RbmModel::new(p.clone(), BaseBernoulli::uniform(4)).unwrap();
    let l = TemperatureLadder::uniform(3).unwrap();
    let pool = pool_after_sweeps(&model, &l, 20, 3, 1);
    let data = BitDataset::new(2, 4, vec![1, 0, 1, 0, 1, 1, 0, 0]).unwrap();
    let g = pcd_gradient(&p, pool.chains(), 3, &data, &[0, 1]);
    assert!(!g.fallback);
    let n = pool.len() as f64;
    for i in 0..4 {
        let pos = (data.row(0)[i] + data.row(1)[i]) as f64 / 2.0;
        let neg = pool.chains().iter().map(|c| c.x.v[i] as f64).sum::<f64>() / n;
        assert!((g.c[i] - (pos - neg)).abs() < 1e-12);
        for j in 0..3 {
            let pos = pos * 0.5;
            let neg = pool.chains().iter().map(|c| (c.x.v[i] * c.x.h[j]) as f64).sum::<f64>() / n;
            assert!((g.w[i * 3 + j] - (pos - neg)).abs() < 1e-12);
        }
    }
}

/// Exact mean log-likelihood gradient by enumerating the joint.
fn exact_gradient(p: &RbmParams, data: &BitDataset) -> Vec<f64> {
    let mut g = RbmGradient::zeros(p.m, p.j);
    positive_phase(p, data, &(0..data.rows).collect::<Vec<_>>(), &mut g);
    let lz = rbm_exact_log_z(p).unwrap();
    for a in 0..1 << p.m {
        for b in 0..1 << p.j {
            let x = RbmState { v: bits(p.m, a), h: bits(p.j, b) };
            subtract_weighted(p, &x, (p.log_f(&x.v, &x.h) - lz).exp(), &mut g);
        }
    }
    g.flat()
}

#[test]
fn pcd_direction_matches_enumeration() {
    let p = RbmParams::random(4, 3, 42, 1.0);
    let data = BitDataset::new(5, 4, vec![1, 0, 1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1, 1, 0]).unwrap();
    let rows: Vec<usize> = (0..5).collect();
    let base = BaseBernoulli::from_data(&data, DEFAULT_CLIP);
    let model = RbmModel::new(p.clone(), base).unwrap();
    let mut l = TemperatureLadder::uniform(5).unwrap();
    let mut pool = ChainPool::new(&model, 5, 200, 3);
    init_iterations(&model, &mut l, &mut pool, &InitConfig::default());
    let mut avg = vec![0.0; p.m * p.j + p.m + p.j];
    let rounds = 5000;
    for _ in 0..rounds {
        pool.run(&model, &l, 1, false);
        let g = pcd_gradient(&p, pool.chains(), 5, &data, &rows);
        for (a, v) in avg.iter_mut().zip(g.flat()) {
            *a += v / rounds as f64;
        }
    }
    let exact = exact_gradient(&p, &data);
    let dot: f64 = avg.iter().zip(&exact).map(|(a, b)| a * b).sum();
    let na = avg.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
    let angle = (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees();
    assert!(angle < 5.0, "angle {angle}");
}

#[test]
fn balanced_data_on_zero_model_has_small_gradient() {
    let p = RbmParams::zeros(4, 3);
    let data = BitDataset::new(16, 4, (0..16).flat_map(|a| bits(4, a)).collect()).unwrap();
    let model = RbmModel::new(p.clone(), BaseBernoulli::from_data(&data, DEFAULT_CLIP)).unwrap();
    let l = TemperatureLadder::uniform(4).unwrap();
    let mut pool = ChainPool::new(&model, 4, 400, 5);
    let mut avg = vec![0.0; 12 + 7];
    let rounds = 200;
    for _ in 0..rounds {
        pool.run(&model, &l, 1, false);
        let g = pcd_gradient(&p, pool.chains(), 4, &data, &(0..16).collect::<Vec<_>>());
        for (a, v) in avg.iter_mut().zip(g.flat()) {
            *a += v / rounds as f64;
        }
    }
    // each component is a difference of means of 0/1 or 0/¼ variables over
    // 8e4 correlated draws
    assert!(avg.iter().all(|v| v.abs() < 0.02), "{avg:?}");
}

fn oracle_setup() -> (RbmParams, BitDataset) {
    let p = RbmParams::random(4, 3, 42, 1.0);
    let model = RbmModel::new(p.clone(), BaseBernoulli::uniform(4)).unwrap().with_exact_sampler().unwrap();
    let data = model.exact_sampler().unwrap().sample_dataset(&p, 500, &mut chain_rng(2, 0));
    (p, data)
}

#[test]
fn frozen_parameters_track_the_oracle() {
    let (p, data) = oracle_setup();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        cd1_pretrain_epochs: 0,
        n_chains: 50,
        sweeps_per_update: 10,
        k: 20,
        epochs: 40,
        batch_size: 50,
        ..TrainConfig::default()
    };
    let out = train_with_tracking(&cfg, Some(&p), &data, None, 4).unwrap();
    assert_eq!(out.params, p);
    let truth = rbm_exact_log_z(&p).unwrap();
    let tail = &out.trace.records[out.trace.records.len() * 3 / 4..];
    let mean = tail.iter().map(|r| r.log_zhat_k).sum::<f64>() / tail.len() as f64;
    assert!((mean - truth).abs() < 0.2, "{mean} vs {truth}");
}

#[test]
fn zero_alpha_keeps_initial_estimate() {
    let (p, data) = oracle_setup();
    let cfg = TrainConfig {
        alpha: 0.0,
        learning_rate: 0.0,
        cd1_pretrain_epochs: 0,
        n_chains: 10,
        k: 10,
        epochs: 1,
        batch_size: 500,
        ..TrainConfig::default()
    };
    let out = train_with_tracking(&cfg, Some(&p), &data, Some(&data), 4).unwrap();
    let init = TrainConfig { epochs: 0, ..cfg.clone() };
    let before = train_with_tracking(&init, Some(&p), &data, None, 4).unwrap();
    assert_eq!(out.trace.records.len(), 1);
    assert_eq!(out.trace.records[0].log_zhat_k, *before.ladder.log_zhat().last().unwrap());
    assert_eq!(out.trace.records[0].val_ll, Some(out.trace.records[0].train_ll));
}

#[test]
fn divergence_guard() {
    assert!(divergence_check(-1e6, 3).is_ok());
    assert!(matches!(divergence_check(1.5e6, 3), Err(Error::Diverged(_))));
    assert!(matches!(divergence_check(f64::NAN, 3), Err(Error::Diverged(_))));
}

#[test]
fn training_is_deterministic() {
    let (_, data) = oracle_setup();
    let cfg = TrainConfig { hidden: 3, n_chains: 8, k: 8, epochs: 1, batch_size: 100, ..TrainConfig::default() };
    let a = train_with_tracking(&cfg, None, &data, None, 9).unwrap();
    let b = train_with_tracking(&cfg, None, &data, None, 9).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace, b.trace);
    let _ = a.ladder.len();
    let _: fn(&RbmModel, &RbmState) -> f64 = <RbmModel as TemperedModel>::delta;
}
