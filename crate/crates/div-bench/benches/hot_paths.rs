//! Criterion benchmarks of the training hot paths.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use div_core::model::{fit_div, FitConfig, NoiseConfig};
use div_core::nn::{Activation, Mlp};
use div_core::simlab::Scenario;
use div_core::energy_loss_parts;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

fn bench_mlp_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::init(&[101, 100, 100, 100, 1], Activation::Relu, &mut rng).unwrap();
    let input = gaussian(256, 101, 2);
    c.bench_function("mlp_forward_256x101_w100", |b| {
        b.iter(|| net.forward(input.view()).unwrap())
    });
}

fn bench_energy_loss(c: &mut Criterion) {
    let obs = gaussian(256, 2, 3);
    let a = gaussian(256, 2, 4);
    let b2 = gaussian(256, 2, 5);
    c.bench_function("energy_loss_parts_256x2", |b| {
        b.iter(|| energy_loss_parts(obs.view(), a.view(), b2.view()).unwrap())
    });
}

fn bench_fit_steps(c: &mut Criterion) {
    let data = Scenario::ContLinearContZ.generate(256, 9).unwrap().dataset;
    c.bench_function("fit_div_10_steps_n256_w100", |b| {
        b.iter_batched(
            || data.clone(),
            |d| {
                let config = FitConfig {
                    epochs: 10,
                    seed: 1,
                    noise: NoiseConfig {
                        dim_eps_x: 50,
                        dim_eps_y: 50,
                        dim_eps_h: 50,
                    },
                    ..FitConfig::default()
                };
                fit_div(&d, &config).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_mlp_forward, bench_energy_loss, bench_fit_steps
}
criterion_main!(benches);
