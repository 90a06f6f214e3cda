//! Compares the sequential and rayon-backed execution strategies on the
//! two data-parallel hot loops: greedy policy rollouts over a dataset and
//! the per-feature stump search inside a boosting round.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mddag::boosting::{self, StrongSequence};
use mddag::dataset::{generate_synthetic, LabeledDataset, SynthSpec};
use mddag::mdp::{LossKind, RewardSpec};
use mddag::policy::{self, LearnerConfig, PolicySnapshot};
use mddag::Parallelism;

fn wide_dataset() -> LabeledDataset {
    // Many features so the per-feature search has something to spread.
    let spec = SynthSpec::default();
    let narrow = generate_synthetic(&spec).unwrap();
    let d = 32;
    let mut features = Vec::with_capacity(narrow.n() * d);
    for i in 0..narrow.n() {
        let row = narrow.row(i);
        for j in 0..d {
            features.push(row[j % 2] * (1.0 + j as f64 * 0.01));
        }
    }
    LabeledDataset::new(features, narrow.labels().to_vec(), d, None, None).unwrap()
}

fn fixture() -> (LabeledDataset, StrongSequence, PolicySnapshot, RewardSpec) {
    let mut spec = SynthSpec::default();
    for c in spec.clusters.iter_mut() {
        c.count /= 2;
    }
    let data = generate_synthetic(&spec).unwrap();
    let model = boosting::train_adaboost_mh(&data, 200, Parallelism::default())
        .unwrap()
        .sequence;
    let reward = RewardSpec::new(LossKind::ZeroOne, 0.01);
    let cfg = LearnerConfig {
        episodes_total: 5_000,
        eval_every: 1_000,
        seed: 42,
        ..LearnerConfig::default()
    };
    let snapshot = policy::train(&data, &model, &reward, &cfg, Parallelism::default(), |_| {})
        .unwrap();
    (data, model, snapshot, reward)
}

fn bench_rollout(c: &mut Criterion) {
    let (data, model, snapshot, reward) = fixture();
    let mut group = c.benchmark_group("rollout_dataset");
    for par in [Parallelism::Sequential, Parallelism::Parallel] {
        group.bench_function(format!("{:?}", par), |b| {
            b.iter(|| {
                black_box(policy::rollout_dataset(
                    &snapshot.q,
                    &model,
                    black_box(&data),
                    &reward,
                    par,
                ))
            })
        });
    }
    group.finish();
}

fn bench_stump_search(c: &mut Criterion) {
    let data = wide_dataset();
    let weights = vec![1.0 / (data.n() * data.k()) as f64; data.n() * data.k()];
    let mut group = c.benchmark_group("best_stump");
    for par in [Parallelism::Sequential, Parallelism::Parallel] {
        group.bench_function(format!("{:?}", par), |b| {
            b.iter(|| black_box(boosting::best_stump(black_box(&data), &weights, par)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rollout, bench_stump_search);
criterion_main!(benches);
