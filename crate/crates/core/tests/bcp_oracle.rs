//! Change-point sampler against exhaustive enumeration of all partitions.

use drivepat::bcp::{self, BcpModel, BcpParams, Partition};
use drivepat::ingest::KinematicMatrix;
use drivepat::numeric::log_sum_exp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn univariate(values: &[f64]) -> KinematicMatrix {
    let times = (0..values.len()).map(|i| i as f64).collect();
    KinematicMatrix::from_columns(times, vec![("x".into(), values.to_vec())]).unwrap()
}

/// Marginal `P(U_i = 1 | X)` by weighting each of the `2^(n-1)` partitions
/// with `exp(log_marginal)`.
fn enumerate_posteriors(data: &KinematicMatrix, p0: f64, w0: f64) -> Vec<f64> {
    let n = data.n_rows();
    let parts: Vec<Partition> = (0..1u64 << (n - 1)).map(|m| Partition::from_mask(n, m)).collect();
    let logs: Vec<f64> = parts
        .iter()
        .map(|p| bcp::log_marginal(data, p, p0, w0).unwrap())
        .collect();
    let z = log_sum_exp(logs.iter().copied());
    let mut probs = vec![0.0; n];
    for (p, l) in parts.iter().zip(&logs) {
        let w = (l - z).exp();
        for (i, prob) in probs.iter_mut().enumerate() {
            if p.is_change(i) {
                *prob += w;
            }
        }
    }
    probs
}

fn random_instance(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift_at = rng.random_range(3..n - 2);
    let jump: f64 = rng.random_range(0.0..3.0);
    (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            z + if i >= shift_at { jump } else { 0.0 }
        })
        .collect()
}

#[test]
fn mcmc_matches_enumeration_on_small_instances() {
    for seed in 0..5 {
        let values = random_instance(seed, 10);
        let data = univariate(&values);
        let exact = enumerate_posteriors(&data, 0.2, 0.2);
        let params = BcpParams {
            sweeps: 4000,
            burn_in: 100,
            seed,
            ..Default::default()
        };
        let mcmc = bcp::run(&data, &params).unwrap();
        for (i, (e, m)) in exact.iter().zip(&mcmc.change_prob).enumerate() {
            assert!((e - m).abs() <= 0.05, "seed {seed} index {i}: exact {e} mcmc {m}");
        }
    }
}

#[test]
fn enumeration_normalizes_and_first_index_is_certain() {
    let data = univariate(&random_instance(9, 8));
    let probs = enumerate_posteriors(&data, 0.2, 0.2);
    assert!((probs[0] - 1.0).abs() < 1e-12);
    assert!(probs.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
}

#[test]
fn change_prob_invariant_under_offset() {
    let values = random_instance(21, 40);
    let shifted: Vec<f64> = values.iter().map(|v| v + 1234.5).collect();
    let params = BcpParams {
        sweeps: 2000,
        burn_in: 100,
        seed: 5,
        ..Default::default()
    };
    let a = bcp::run(&univariate(&values), &params).unwrap();
    let b = bcp::run(&univariate(&shifted), &BcpParams { seed: 6, ..params }).unwrap();
    for (x, y) in a.change_prob.iter().zip(&b.change_prob) {
        assert!((x - y).abs() <= 0.05);
    }
}

#[test]
fn larger_shift_never_lowers_odds() {
    let base: Vec<f64> = random_instance(33, 30).iter().map(|v| v * 0.5).collect();
    let state = Partition::single_block(30);
    let mut last = f64::NEG_INFINITY;
    for jump in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let values: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, v)| v + if i >= 15 { jump } else { 0.0 })
            .collect();
        let mut model = BcpModel::new(&univariate(&values), 0.2, 0.2, false).unwrap();
        let odds = model.log_odds(&state, 15);
        assert!(odds >= last - 1e-9, "jump {jump}: {odds} < {last}");
        last = odds;
    }
}

#[test]
fn recovers_single_mean_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let values: Vec<f64> = (0..200)
        .map(|i| rng.sample::<f64, _>(StandardNormal) + if i >= 100 { 3.0 } else { 0.0 })
        .collect();
    let result = bcp::run(&univariate(&values), &BcpParams::default()).unwrap();
    let best = result.change_prob[98..=102].iter().copied().fold(0.0, f64::max);
    assert!(best >= 0.8, "max prob near shift {best}");
}

#[test]
fn iid_noise_rarely_produces_confident_changes() {
    let mut false_alarms = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let values: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let params = BcpParams {
            seed,
            ..Default::default()
        };
        let result = bcp::run(&univariate(&values), &params).unwrap();
        if result.change_prob[1..].iter().any(|&p| p >= 0.5) {
            false_alarms += 1;
        }
    }
    assert!(false_alarms <= 1, "{false_alarms} of 20 seeds had a confident change");
}
