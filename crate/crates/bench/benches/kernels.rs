use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use infoplane::expctl::derive_seeds;
use infoplane::ib::{ib_fixed_point, perturbed_uniform_encoder, IbOptions, IbProblem};
use infoplane::mi::{mutual_information, snapshot_plane_coords, JointTable};
use infoplane::net::{forward_all, init_weights, loss_and_gradients, Batch, NetworkConfig, Trainer};
use infoplane::task::{reference_sphere_rule, sample_training_set};

fn mi_kernels(c: &mut Criterion) {
    let data: Vec<f64> = (0..64).map(|i| ((i * 37) % 11 + 1) as f64).collect();
    let total: f64 = data.iter().sum();
    let table = JointTable::new(8, 8, data.iter().map(|v| v / total).collect()).unwrap();
    c.bench_function("mi/8x8 table", |b| b.iter(|| mutual_information(black_box(&table)).unwrap()));

    let (_, joint) = reference_sphere_rule().unwrap();
    let state = init_weights(&NetworkConfig::default()).unwrap();
    let record = forward_all(&state).unwrap();
    c.bench_function("mi/snapshot of 7 hidden layers", |b| {
        b.iter(|| snapshot_plane_coords(black_box(&record), &joint, 30).unwrap())
    });
}

fn net_kernels(c: &mut Criterion) {
    let (_, joint) = reference_sphere_rule().unwrap();
    let seeds = derive_seeds(1);
    let sample = sample_training_set(&joint, 0.85, seeds.sample).unwrap();
    let config = NetworkConfig::default();
    let state = init_weights(&config).unwrap();
    let batch = Batch::from_sample(&sample);

    c.bench_function("net/full-sample gradient", |b| {
        b.iter(|| loss_and_gradients(black_box(&state), &batch).unwrap())
    });
    c.bench_function("net/forward 4096 patterns", |b| b.iter(|| forward_all(black_box(&state)).unwrap()));

    let mut group = c.benchmark_group("net/epoch");
    for batch_size in [256, 1024] {
        let config = NetworkConfig {
            batch_size,
            ..config.clone()
        };
        group.bench_with_input(BenchmarkId::from_parameter(batch_size), &config, |b, config| {
            let mut trainer = Trainer::new(state.clone(), &sample, config);
            b.iter(|| trainer.epoch(seeds.shuffle).unwrap())
        });
    }
    group.finish();
}

fn ib_kernels(c: &mut Criterion) {
    let (_, joint) = reference_sphere_rule().unwrap();
    let (problem, _) = IbProblem::from_joint(&joint).merge_sufficient();
    let opts = IbOptions::default();
    let mut group = c.benchmark_group("ib/fixed point");
    group.sample_size(10);
    for beta in [1.0, 10.0, 100.0] {
        let init = perturbed_uniform_encoder(problem.n_x(), 64, &mut ChaCha8Rng::seed_from_u64(7));
        group.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, &beta| {
            b.iter(|| ib_fixed_point(&problem, beta, 64, black_box(&init), &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mi_kernels, net_kernels, ib_kernels);
criterion_main!(benches);
