use std::hint::black_box;

use bstsim_bench::{config, fixture};
use bstsim_core::harness::{execute_matrix, OutputFormat, RunSpec};
use bstsim_core::{CompleteTree, Engine};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const HEIGHT: u32 = 15;
const KEYS: &str = "random:16k:seed=1";

fn engine_variants(c: &mut Criterion) {
    let (tree, keys) = fixture(HEIGHT, KEYS, 8);
    let mut g = c.benchmark_group("engine_run");
    g.throughput(Throughput::Elements(keys.len() as u64));
    for v in ["hrz", "dup8", "hyb4", "hyb4q", "hyb8q"] {
        let cfg = config(v, HEIGHT);
        g.bench_with_input(BenchmarkId::from_parameter(v), &keys, |b, keys| {
            let mut engine = Engine::new(cfg, &tree).unwrap();
            b.iter(|| black_box(engine.run(black_box(keys)).unwrap().total_cycles))
        });
    }
    g.finish();
}

fn recording_overhead(c: &mut Criterion) {
    let (tree, keys) = fixture(10, "random:4k:seed=3", 4);
    let cfg = config("hyb4q", 10);
    let mut g = c.benchmark_group("event_log");
    for record in [false, true] {
        g.bench_with_input(BenchmarkId::from_parameter(record), &record, |b, &record| {
            let mut engine = Engine::new(cfg, &tree).unwrap().with_recording(record);
            b.iter(|| black_box(engine.run(&keys).unwrap().events.len()))
        });
    }
    g.finish();
}

fn tree_build(c: &mut Criterion) {
    c.bench_function("tree_build_h19", |b| b.iter(|| CompleteTree::build(black_box(19)).unwrap()));
}

fn small_matrix(c: &mut Criterion) {
    let spec = RunSpec::new(
        10,
        ["dup4", "hyb4", "hyb4q"].iter().map(|v| v.parse().unwrap()).collect(),
        ["equal:2k", "random:2k:seed=1", "split:2k"].iter().map(|s| s.parse().unwrap()).collect(),
        1,
        OutputFormat::Csv,
    )
    .unwrap();
    c.bench_function("matrix_h10_4x3", |b| b.iter(|| execute_matrix(black_box(&spec)).unwrap().rows.len()));
}

criterion_group!(benches, engine_variants, recording_overhead, tree_build, small_matrix);
criterion_main!(benches);
