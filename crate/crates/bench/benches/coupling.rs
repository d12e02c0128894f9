use std::hint::black_box;

use arlequin_bench::{meshes, problem, smooth_trig};
use arlequin_core::{homogenized_tensor, ArlequinProblem, Enrichment, Objective, SymMat2};
use criterion::{criterion_group, criterion_main, Criterion};

fn setup(c: &mut Criterion) {
    let mut g = c.benchmark_group("setup");
    g.sample_size(10);
    g.bench_function("meshes eps=1/4", |b| b.iter(|| meshes(black_box(0.25))));
    let nm = meshes(0.25);
    let f = smooth_trig();
    g.bench_function("problem eps=1/4", |b| b.iter(|| ArlequinProblem::new(nm.clone(), &f, 0.25).unwrap()));
    g.finish();
}

fn per_kbar(c: &mut Criterion) {
    let pb = problem(0.25);
    let obj = Objective::new(&pb, 1, Enrichment::Single);
    let mut g = c.benchmark_group("per_kbar eps=1/4");
    g.bench_function("solve", |b| b.iter(|| pb.solve(SymMat2::iso(black_box(1.9)), 1, Enrichment::Single).unwrap()));
    g.bench_function("J dJ d2J", |b| b.iter(|| obj.eval_scalar(black_box(1.9), 2).unwrap()));
    g.finish();
}

fn cell(c: &mut Criterion) {
    let f = smooth_trig();
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("cell n=128", |b| b.iter(|| homogenized_tensor(&f, black_box(128)).unwrap()));
    g.finish();
}

criterion_group!(benches, setup, per_kbar, cell);
criterion_main!(benches);
