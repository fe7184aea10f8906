use std::hint::black_box;

use banet::data::{expand_training, segment_dataset, AugmentConfig, Normalizer, SegmentConfig};
use banet::model::{build_model, ForwardMode, ModelSpec, Variant};
use banet::rng::stream;
use criterion::{criterion_group, criterion_main, Criterion};
use banet::synth::{generate, SynthConfig};
use rand::Rng as _;

fn input(len: usize) -> Vec<f64> {
    let mut rng = stream(1, &[]);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn models(c: &mut Criterion) {
    for v in [Variant::Banet, Variant::StackedLstm, Variant::BiLstm, Variant::ConvLstm, Variant::BanetCompatible] {
        let model = build_model(&ModelSpec::new(v), 0).unwrap();
        let x = input(model.input_len());
        let batch = [(x.as_slice(), 1usize)];
        c.bench_function(&format!("{v}/forward"), |b| b.iter(|| model.predict(black_box(&x)).unwrap()));
        c.bench_function(&format!("{v}/forward+backward"), |b| {
            b.iter(|| model.compute_gradients(black_box(&batch), ForwardMode::Train { seed: 3 }).unwrap())
        });
    }
}

fn pipeline(c: &mut Criterion) {
    let (dataset, _) = generate(&SynthConfig::default()).unwrap();
    let seg = SegmentConfig::default();
    c.bench_function("segment_dataset", |b| b.iter(|| segment_dataset(black_box(&dataset), &seg).unwrap()));
    let mut segs = segment_dataset(&dataset, &seg).unwrap();
    let norm = Normalizer::fit(&segs).unwrap();
    for s in &mut segs {
        norm.apply_in_place(s).unwrap();
    }
    let aug = AugmentConfig::default();
    c.bench_function("expand_training", |b| b.iter(|| expand_training(black_box(&segs), &aug, 5).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = models, pipeline
}
criterion_main!(benches);
