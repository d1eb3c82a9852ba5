//! Parallel versus sequential throughput of the chunked Monte Carlo
//! kernels. Results are bit-identical across modes; these benchmarks
//! measure the speedup only.
//!
//! With `--no-default-features` the parallel path is compiled out and the
//! two modes coincide.

use criterion::{criterion_group, criterion_main, Criterion};
use spt::model::{AlphaPair, DirichletParams, Model};
use spt::portfolio::{lambda_mc, unconstrained_optimum};
use spt::simplex::sample_dirichlet;
use spt::{exec, qp};
use std::hint::black_box;

fn model(d: usize) -> Model {
    Model::dirichlet(DirichletParams {
        a: vec![3.0; d],
        b: vec![1.0; d],
        alpha: AlphaPair::Scalar(0.1),
    })
    .unwrap()
}

fn bench_modes(c: &mut Criterion, group: &str, mut f: impl FnMut()) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    exec::set_sequential(false);
    g.bench_function("parallel", |b| b.iter(&mut f));
    exec::set_sequential(true);
    g.bench_function("sequential", |b| b.iter(&mut f));
    exec::set_sequential(false);
    g.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let alpha = vec![2.0; 10];
    bench_modes(c, "sample_dirichlet_100k_d10", || {
        black_box(sample_dirichlet(&alpha, 100_000, 42).unwrap());
    });
}

fn bench_growth_estimate(c: &mut Criterion) {
    let m = model(5);
    let gp = unconstrained_optimum(&m);
    bench_modes(c, "lambda_mc_50k_d5", || {
        black_box(lambda_mc(&m, &gp, 50_000, 7).unwrap());
    });
}

fn bench_qp_assembly(c: &mut Criterion) {
    let m = model(3);
    let fam = qp::generate_family(20, 20, 3, 1).unwrap();
    bench_modes(c, "assemble_qp_20k_m20", || {
        black_box(qp::assemble_qp(&m, &fam, 20_000, 3).unwrap());
    });
}

criterion_group!(
    benches,
    bench_sampling,
    bench_growth_estimate,
    bench_qp_assembly
);
criterion_main!(benches);
