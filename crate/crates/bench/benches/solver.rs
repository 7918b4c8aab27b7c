use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vortex_core::{hamiltonian, lowest, EigensolverConfig, LinearOperator, C64};
use vortex_bench::{reference_model, small_model};

fn matvec(c: &mut Criterion) {
    let model = reference_model();
    let h = model.hamiltonian().unwrap();
    let x: Vec<C64> = (0..h.dim()).map(|i| C64::new((i % 7) as f64, (i % 3) as f64)).collect();
    let mut y = vec![C64::new(0.0, 0.0); h.dim()];
    c.bench_function("matvec_4x4_n8", |b| b.iter(|| h.apply(black_box(&x), &mut y)));
}

fn build(c: &mut Criterion) {
    let model = reference_model();
    c.bench_function("build_4x4_n8", |b| b.iter(|| hamiltonian::build(&model.lattice, &model.basis).unwrap()));
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("lanczos");
    group.sample_size(10);
    let small = small_model();
    let hs = small.hamiltonian().unwrap();
    group.bench_function("4x3_n6_k4", |b| b.iter(|| lowest(&hs, &EigensolverConfig::default()).unwrap()));
    let model = reference_model();
    let h = model.hamiltonian().unwrap();
    let cfg = EigensolverConfig { k: 2, ..Default::default() };
    group.bench_function("4x4_n8_k2", |b| b.iter(|| lowest(&h, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, matvec, build, solve);
criterion_main!(benches);
