use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use csma_partite::mixing::{conductance_star_with, DistanceCurve};
use csma_partite::montecarlo::{default_workers, sample_hitting_time_with};
use csma_partite::{AggState, Exec, HittingQuery, PartiteNetwork};

fn execs() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    if Exec::parallel_available() {
        v.push(("parallel", Exec::Parallel));
    }
    v
}

fn hitting_batch(c: &mut Criterion) {
    let gen = PartiteNetwork::new(vec![3, 2], 20.0).unwrap().generator(&[]).unwrap();
    let q = HittingQuery::new(AggState::branch(1, 3), AggState::branch(2, 2)).unwrap();
    let mut g = c.benchmark_group("hitting_batch");
    g.sample_size(10);
    for (name, workers) in [("sequential", 1), ("parallel", default_workers())] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| black_box(sample_hitting_time_with(&gen, q, 2000, 1, w).unwrap().mean()))
        });
    }
    g.finish();
}

fn bottleneck(c: &mut Criterion) {
    let net = PartiteNetwork::new(vec![4, 4, 4, 4, 3], 10.0).unwrap();
    let mut g = c.benchmark_group("conductance_star");
    g.sample_size(10);
    for (name, exec) in execs() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(conductance_star_with(&net, e).unwrap().phi))
        });
    }
    g.finish();
}

fn distance(c: &mut Criterion) {
    let net = PartiteNetwork::new(vec![20; 6], 5.0).unwrap();
    let mut g = c.benchmark_group("worst_case_distance");
    g.sample_size(10);
    for (name, exec) in execs() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| black_box(DistanceCurve::new(&net, e).unwrap().at(50.0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, hitting_batch, bottleneck, distance);
criterion_main!(benches);
