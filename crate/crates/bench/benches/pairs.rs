use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use facelight_core::audit::measure_images;
use facelight_core::pairs::{
    accumulate, calibrate_threshold, EmbeddingScorer, EngineOptions, HistogramSpec, ImpostorScope, PairSpace, Scorer,
};
use facelight_core::synth::{generate, SynthConfig, SynthGroup};
use std::hint::black_box;

fn dataset(per_group: usize, dim: usize) -> facelight_core::synth::SynthDataset {
    generate(&SynthConfig {
        dim,
        groups: ["AAF", "AAM", "CF", "CM"]
            .iter()
            .map(|g| SynthGroup::new(g, per_group / 5, 5, 175.0, 35.0))
            .collect(),
        ..SynthConfig::default()
    })
    .unwrap()
}

fn pair_engine(c: &mut Criterion) {
    let data = dataset(500, 128);
    let categories: Vec<_> = data
        .records
        .iter()
        .map(|_| Some(facelight_core::ExposureCategory::Middle))
        .collect();
    let scorer = EmbeddingScorer::new(&data.embeddings, &data.records).unwrap();
    let mut group = c.benchmark_group("pair_engine");
    for scope in [ImpostorScope::WithinGroup, ImpostorScope::CrossGroup] {
        let space = PairSpace::new(&data.records, scope);
        let n = data.records.len() as u64;
        let pairs = match scope {
            ImpostorScope::WithinGroup => 4 * 500 * 499 / 2,
            ImpostorScope::CrossGroup => n * (n - 1) / 2,
        };
        group.throughput(Throughput::Elements(pairs));
        group.bench_function(format!("{scope:?}_2000x128"), |b| {
            b.iter(|| {
                accumulate(
                    &data.records,
                    &space,
                    &scorer,
                    &categories,
                    0.5,
                    HistogramSpec::default(),
                    &EngineOptions::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn dot_product(c: &mut Criterion) {
    let data = dataset(50, 512);
    let scorer = EmbeddingScorer::new(&data.embeddings, &data.records).unwrap();
    c.bench_function("score_512d", |b| {
        b.iter(|| scorer.score(black_box(3), black_box(117)).unwrap())
    });
}

fn calibration(c: &mut Criterion) {
    let scores: Vec<f64> = (0..1_000_000u64)
        .map(|i| ((i * 2_654_435_761) % 1_000_003) as f64 / 1e6)
        .collect();
    c.bench_function("calibrate_1e6", |b| {
        b.iter(|| calibrate_threshold(black_box(&scores), 1e-4, "CM").unwrap())
    });
}

fn measurement(c: &mut Criterion) {
    let data = dataset(50, 16);
    c.bench_function("measure_200_images", |b| {
        b.iter(|| measure_images(&data.records, &data).unwrap())
    });
}

criterion_group!(benches, pair_engine, dot_product, calibration, measurement);
criterion_main!(benches);
