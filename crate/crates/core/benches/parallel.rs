//! Sequential against rayon execution for world enumeration and batch
//! benchmarking. Without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lpadc::benchgen::{gen_graph, BenchSpec, Family};
use lpadc::grounder::ground;
use lpadc::infer::Task;
use lpadc::oracle::Oracle;
use lpadc::par::ExecMode;
use lpadc::parser::parse_program;
use std::hint::black_box;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn oracle_enumeration(c: &mut Criterion) {
    // 14 edges, 2^14 worlds
    let gp = ground(&parse_program(&gen_graph(9, 1)).unwrap()).unwrap();
    let mut group = c.benchmark_group("oracle_mpe");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(Oracle::new(&gp).with_exec(exec).mpe(&gp.evidence).unwrap().value))
        });
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let specs: Vec<BenchSpec> = (0..16)
        .map(|seed| BenchSpec::new(Family::Graph, 30, seed, Task::Mpe))
        .collect();
    let mut group = c.benchmark_group("bench_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(lpadc::benchgen::run_batch(&specs, exec).len()))
        });
    }
    group.finish();
}

criterion_group!(benches, oracle_enumeration, batch);
criterion_main!(benches);
