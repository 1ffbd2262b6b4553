use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scenl::lang::{format, parse, tokenize, validate};
use scenl::{Machine, MachineConfig};
use scenl_bench::{counting_loop, large_program, registry};

fn front_end(c: &mut Criterion) {
    let src = large_program(200);
    let program = parse(&src).unwrap();
    let reg = registry();

    c.bench_function("tokenize", |b| b.iter(|| tokenize(black_box(&src)).unwrap()));
    c.bench_function("parse", |b| b.iter(|| parse(black_box(&src)).unwrap()));
    c.bench_function("format", |b| b.iter(|| format(black_box(&program))));
    c.bench_function("validate", |b| b.iter(|| validate(black_box(&program), &reg)));
}

fn interpreter(c: &mut Criterion) {
    let reg = Arc::new(registry());
    let mut group = c.benchmark_group("repeat_to_quiescence");
    for n in [100u32, 10_000] {
        let program = counting_loop(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &program, |b, p| {
            b.iter(|| {
                let mut m = Machine::load(p, reg.clone(), MachineConfig::default()).unwrap();
                m.run_to_quiescence().unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, front_end, interpreter);
criterion_main!(benches);
