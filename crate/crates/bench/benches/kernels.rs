use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xlcap::recognition::sweep_threshold;
use xlcap::retrieval::evaluate_set;
use xlcap::ObjectVocabulary;
use xlcap_bench::{recognition_set, retrieval_set};

fn retrieval(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_set");
    group.sample_size(20);
    for images in [100, 1000] {
        let (img, cap, pairing) = retrieval_set(images, 5, 64, 7);
        group.bench_with_input(BenchmarkId::from_parameter(images), &images, |b, _| {
            b.iter(|| evaluate_set(black_box(&img), black_box(&cap), &pairing, "bench").unwrap())
        });
    }
    group.finish();
}

fn recognition(c: &mut Criterion) {
    let (table, truth) = recognition_set(1000, 80, 11);
    c.bench_function("sweep_threshold/1000x80", |b| {
        b.iter(|| sweep_threshold(black_box(&table), &truth).unwrap())
    });
}

fn mentions(c: &mut Criterion) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/coco80_vocab.json");
    let vocab = ObjectVocabulary::load(path).unwrap();
    let captions = [
        "A man in a red shirt rides a bicycle past two parked cars.",
        "Two dogs play with a frisbee on the grass near a bench.",
        "A woman holding an umbrella waits next to a traffic light.",
        "Children sit at a dining table with cups, bowls and a cake.",
    ];
    c.bench_function("detect_mentions/4", |b| {
        b.iter(|| captions.iter().map(|t| vocab.detect_mentions(black_box(t)).len()).sum::<usize>())
    });
}

criterion_group!(benches, retrieval, recognition, mentions);
criterion_main!(benches);
