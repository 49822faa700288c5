use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use prsynth::cfg::sample;
use prsynth::corpus;
use prsynth::pipeline::{bounded_equivalence, grammar_agreement, grammar_of};
use prsynth::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample");
    group.sample_size(20);
    for name in ["L4", "L12"] {
        let e = corpus::load(name).unwrap();
        for (label, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(label, name), &e, |b, e| {
                b.iter(|| sample(&e.grammar, 4_000, 24, 7, exec).unwrap());
            });
        }
    }
    group.finish();
}

fn equivalence(c: &mut Criterion) {
    let mut group = c.benchmark_group("bounded_equivalence");
    group.sample_size(10);
    for name in ["L7", "L12"] {
        let prs = corpus::load(name).unwrap().ground_truth.unwrap();
        let g = grammar_of(&prs);
        for (label, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(label, name), &(&prs, &g), |b, (prs, g)| {
                b.iter(|| bounded_equivalence(prs, g, 10, 3, exec).unwrap());
            });
        }
    }
    group.finish();
}

fn agreement(c: &mut Criterion) {
    let mut group = c.benchmark_group("grammar_agreement");
    group.sample_size(10);
    let e = corpus::load("L12").unwrap();
    let g = grammar_of(e.ground_truth.as_ref().unwrap());
    for (label, exec) in MODES {
        group.bench_function(label, |b| b.iter(|| grammar_agreement(e.cfg(), &g, 12, 5, exec)));
    }
    group.finish();
}

criterion_group!(benches, sampling, equivalence, agreement);
criterion_main!(benches);
