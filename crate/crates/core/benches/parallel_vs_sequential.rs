//! Hot kernels on a 48³ disclination field. With the `parallel` feature each
//! kernel runs on a one-thread pool and on the full pool (`pool_all`);
//! without it the sequential fallback runs alone.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ldg::field::{disclination_bc, energy, GridSpec, Region};
use ldg::scales::{BadKind, ScaleContext};
use ldg::solver::{semi_implicit_step, semi_implicit_step_bound};
use ldg::{FieldQ, MaterialParams};

fn field() -> FieldQ {
    let grid = GridSpec::centered(&[48, 48, 48], 1.0 / 24.0).unwrap();
    let mp = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
    disclination_bc(&grid, &mp, 0.125, 2, [0.0; 3], 0.5).unwrap()
}

fn kernels(c: &mut Criterion, label: &str, run: &dyn Fn(&mut (dyn FnMut() + Send))) {
    let f = field();
    let tau = semi_implicit_step_bound(&f);
    let nodes: Vec<usize> = (0..f.len()).collect();
    let mut g = c.benchmark_group(label);
    g.sample_size(10);
    g.bench_function("energy", |b| {
        b.iter(|| {
            run(&mut || {
                black_box(energy(&f, &Region::All).unwrap().total);
            })
        })
    });
    g.bench_function("semi_implicit_step", |b| {
        b.iter(|| run(&mut || drop(black_box(semi_implicit_step(&f, tau)))))
    });
    g.bench_function("bad_sets_ii", |b| {
        b.iter(|| {
            run(&mut || {
                let ctx = ScaleContext::new(&f);
                drop(black_box(
                    ctx.bad_sets(BadKind::II, &[4.0 * f.grid.h()], 1.5, &nodes)
                        .unwrap(),
                ))
            })
        })
    });
    g.finish();
}

#[cfg(feature = "parallel")]
fn bench(c: &mut Criterion) {
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    kernels(c, "pool_1", &|k| one.install(|| k()));
    kernels(c, "pool_all", &|k| all.install(|| k()));
}

#[cfg(not(feature = "parallel"))]
fn bench(c: &mut Criterion) {
    kernels(c, "sequential", &|k| k());
}

criterion_group!(benches, bench);
criterion_main!(benches);
