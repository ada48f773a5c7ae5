use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use encforge::data::{prepare, synth_generate, Encounter, Family, NormMode, SynthSpec};
use encforge::metrics::{disentanglement_scan, ScanOptions};
use encforge::model::{train_from, Model, TrainConfig, Variant};
use encforge::numerics::Tensor;
use encforge::recurrent::{gru_cell, GruParams};

fn dataset(per_family: usize, len: usize) -> Vec<Encounter> {
    let raw: Vec<Encounter> = Family::ALL
        .iter()
        .flat_map(|&family| {
            synth_generate(&SynthSpec {
                family,
                count: per_family,
                seed: 1,
                ..SynthSpec::default()
            })
            .unwrap()
        })
        .collect();
    prepare(&raw, len, NormMode::Shared).unwrap()
}

fn gru_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = GruParams::init(&mut rng, 4, 64);
    let x = Tensor::zeros(&[16, 4]);
    let h = Tensor::zeros(&[16, 64]);
    c.bench_function("gru_step_b16_h64", |b| {
        b.iter(|| gru_cell(black_box(&x), black_box(&h), &p).unwrap())
    });
}

fn training_epoch(c: &mut Criterion) {
    let data = dataset(4, 50);
    let mut group = c.benchmark_group("train_epoch_16x50");
    group.sample_size(10);
    for variant in [Variant::Mtg, Variant::Baseline1] {
        let cfg = TrainConfig {
            variant,
            epochs: 1,
            ..TrainConfig::default()
        };
        let model = Model::new(cfg.model_config(50), 0).unwrap();
        group.bench_function(variant.as_str(), |b| {
            b.iter(|| train_from(model.clone(), &data, &cfg, |_| {}).unwrap())
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let cfg = TrainConfig::default();
    let model = Model::new(cfg.model_config(50), 0).unwrap();
    let opts = ScanOptions {
        samples: 20,
        ..ScanOptions::default()
    };
    let mut group = c.benchmark_group("disentanglement_scan");
    group.sample_size(10);
    group.bench_function("k10_l20", |b| {
        b.iter(|| disentanglement_scan(&model, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, gru_step, training_epoch, scan);
criterion_main!(benches);
