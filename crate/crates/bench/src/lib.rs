//! Benchmark fixtures and groups. The `kernels` bench target runs them.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use mct_core::cotrain::joint_from_probs;
use mct_core::math::{Matrix, Targets};
use mct_core::mct::{mct_step, StepBatch, StepConfig};
use mct_core::models::{Network, OutputKind};
use mct_core::rng::{seeded, SeededRng};
use mct_core::train::{OptimConfig, Optimizer};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DIM: usize = 16;
pub const CLASSES: usize = 10;

pub fn normal(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches")
}

pub fn probabilities(rng: &mut SeededRng, rows: usize, k: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, k);
    for i in 0..rows {
        let row = m.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.random_range(1e-3..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

pub fn classifier(rng: &mut SeededRng, width: usize) -> Network {
    let hidden = if width == 0 { Vec::new() } else { vec![width; 3] };
    let mut net = Network::new(DIM, hidden, CLASSES, OutputKind::Softmax);
    net.init_uniform(rng);
    net
}

pub fn labels(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..CLASSES)).collect()
}

/// Forward and forward+backward for the linear probe and two MLP widths.
pub fn forward_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    let rows = 512;
    g.throughput(Throughput::Elements(rows as u64));
    let mut rng = seeded(1);
    let x = normal(&mut rng, rows, DIM);
    let y = labels(&mut rng, rows);
    for width in [0, 64, 256] {
        let net = classifier(&mut rng, width);
        g.bench_with_input(BenchmarkId::new("forward", width), &net, |b, net| {
            b.iter(|| net.forward(black_box(&x)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("forward_backward", width), &net, |b, net| {
            b.iter(|| {
                let (_, trace) = net.forward(black_box(&x)).unwrap();
                net.backward(&trace, Targets::Hard(&y), 1.0).unwrap()
            })
        });
    }
    g.finish();
}

/// One full meta co-training step at the benchmark configuration.
pub fn meta_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("mct_step");
    g.sample_size(20);
    let mut rng = seeded(2);
    for (width, rows) in [(64, 512), (256, 512)] {
        let models = [classifier(&mut rng, width), classifier(&mut rng, width)];
        let batch = StepBatch {
            labeled_x: [normal(&mut rng, 200, DIM), normal(&mut rng, 200, DIM)],
            labeled_y: [labels(&mut rng, 200), labels(&mut rng, 200)],
            unlabeled: [normal(&mut rng, rows, DIM), normal(&mut rng, rows, DIM)],
        };
        let optim = OptimConfig::default();
        let optimizers = models.clone().map(|m| Optimizer::new(&optim, m.params().len()));
        let cfg = StepConfig {
            lr: [optim.learning_rate; 2],
            supervised_weight: 1.0,
            labeled_eval: Default::default(),
        };
        g.bench_function(BenchmarkId::new("width", width), |b| {
            b.iter_batched(
                || (models.clone(), optimizers.clone(), seeded(3)),
                |(mut m, mut o, mut r)| mct_step(&mut m, &mut o, &batch, &cfg, &mut r).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

/// Joint prediction: Hadamard product and renormalization.
pub fn hadamard(c: &mut Criterion) {
    let mut g = c.benchmark_group("joint_prediction");
    let mut rng = seeded(4);
    for rows in [2_000, 20_000] {
        let p = probabilities(&mut rng, rows, CLASSES);
        let q = probabilities(&mut rng, rows, CLASSES);
        g.throughput(Throughput::Elements(rows as u64));
        g.bench_with_input(BenchmarkId::from_parameter(rows), &(p, q), |b, (p, q)| {
            b.iter(|| joint_from_probs(black_box(p), black_box(q)).unwrap())
        });
    }
    g.finish();
}
