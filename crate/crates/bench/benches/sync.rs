use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fracsync::harness::{Algorithm, Experiment, TrialEngine};
use fracsync::sync::Synchronizer;
use fracsync::ReferenceKind;

fn estimate(c: &mut Criterion) {
    let engine = TrialEngine::new(Experiment::default()).unwrap();
    let e = engine.experiment().clone();
    let rx = engine.received(Algorithm::Proposed, 0).unwrap();
    let blocks = e.block_count();
    let serial = Synchronizer::new(engine.training_sequence(), ReferenceKind::Raw).unwrap();
    let parallel = serial.clone().with_parallel_blocks(true);
    c.bench_function("estimate/serial", |b| {
        b.iter(|| {
            serial
                .estimate(black_box(rx.samples()), 32e9, blocks)
                .unwrap()
        })
    });
    c.bench_function("estimate/parallel_blocks", |b| {
        b.iter(|| {
            parallel
                .estimate(black_box(rx.samples()), 32e9, blocks)
                .unwrap()
        })
    });
}

fn trials(c: &mut Criterion) {
    let engine = TrialEngine::new(Experiment::default()).unwrap();
    let mut g = c.benchmark_group("trial");
    for a in Algorithm::ALL {
        g.bench_function(a.as_str(), |b| {
            b.iter(|| engine.run(a, black_box(7)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, estimate, trials);
criterion_main!(benches);
