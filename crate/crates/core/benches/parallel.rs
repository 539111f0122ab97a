//! Sequential against parallel execution on the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drivepat::gaze::{rolling_entropy, SymbolSequence, WindowConfig};
use drivepat::pipeline::{run_sessions, PipelineConfig};
use drivepat::quantize::{encode, fit_gmm, GmmConfig};
use drivepat::synth::{gen_corpus, gen_coupled_session, gen_markov, CoupledSpec};
use drivepat::topics::{fit_lda, LdaConfig};
use drivepat::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn points(n: usize, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n * d)
        .map(|i| (i / d % 4) as f64 * 3.0 + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn gmm(c: &mut Criterion) {
    let data = points(6000, 3);
    let cfg = GmmConfig {
        k: 16,
        max_iter: 20,
        tol: 0.0,
        restarts: 2,
        seed: 0,
    };
    let fit = fit_gmm(&data, 3, &cfg, Exec::Sequential).unwrap();
    let mut g = c.benchmark_group("gmm");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("fit", name), &exec, |b, &e| {
            b.iter(|| fit_gmm(&data, 3, &cfg, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("encode", name), &exec, |b, &e| {
            b.iter(|| encode(&fit.codebook, &data, 3, e).unwrap())
        });
    }
    g.finish();
}

fn entropy(c: &mut Criterion) {
    let t: Vec<Vec<f64>> = (0..16)
        .map(|i| (0..16).map(|j| if i == j { 0.55 } else { 0.03 }).collect())
        .collect();
    let symbols = gen_markov(&t, 30_000, 3).unwrap();
    let seq = SymbolSequence {
        times: (0..symbols.len()).map(|i| i as f64 * 0.1).collect(),
        symbols,
        n_bins: 16,
    };
    let cfg = WindowConfig {
        window_s: 60.0,
        stride_s: 1.0,
        ..Default::default()
    };
    let mut g = c.benchmark_group("rolling_entropy");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| rolling_entropy(&seq, &cfg, e).unwrap())
        });
    }
    g.finish();
}

fn lda(c: &mut Criterion) {
    let phi: Vec<Vec<f64>> = (0..4)
        .map(|t| (0..40).map(|w| if w / 10 == t { 0.1 } else { 0.0 }).collect())
        .collect();
    let theta: Vec<Vec<f64>> = (0..60)
        .map(|d| (0..4).map(|t| if t == d % 4 { 0.7 } else { 0.1 }).collect())
        .collect();
    let (docs, _) = gen_corpus(&phi, &theta, &vec![100; 60], 2).unwrap();
    let cfg = LdaConfig {
        iters: 200,
        burn_in: 50,
        chains: 4,
        ..LdaConfig::with_k(4)
    };
    let mut g = c.benchmark_group("lda_chains");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| fit_lda(&docs, 40, &cfg, e).unwrap())
        });
    }
    g.finish();
}

fn sessions(c: &mut Criterion) {
    let sessions: Vec<_> = (0..2)
        .map(|s| {
            let spec = CoupledSpec {
                seed: s,
                participant_id: format!("p{s}"),
                duration_s: 120.0,
                imu_rate_hz: 5.0,
                gaze_rate_hz: 5.0,
                ..Default::default()
            };
            gen_coupled_session(&spec).unwrap().0
        })
        .collect();
    let mut cfg = PipelineConfig::default();
    cfg.segmentation.sweeps = 100;
    cfg.gmm.restarts = 1;
    cfg.gmm.max_iter = 30;
    cfg.behavior.iters = 200;
    cfg.behavior.burn_in = 50;
    cfg.states.iters = 200;
    cfg.states.burn_in = 50;
    cfg.gaze.window_s = 30.0;
    cfg.validate().unwrap();
    let mut g = c.benchmark_group("run_sessions");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = PipelineConfig { exec, ..cfg.clone() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| {
                let out = run_sessions(&sessions, &cfg, e);
                assert!(out.iter().all(Result::is_ok));
                out
            })
        });
    }
    g.finish();
}

criterion_group!(benches, gmm, entropy, lda, sessions);
criterion_main!(benches);
