use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mkv_bench::{cloud, Toy, X0};
use mkv_core::bsde::solve_penalized;
use mkv_core::control_opt::value_direct;
use mkv_core::randomized::value_randomized;
use mkv_core::wasserstein2;
use std::hint::black_box;

fn direct(c: &mut Criterion) {
    let mut g = c.benchmark_group("value_direct");
    g.sample_size(10);
    for n in [64, 256] {
        let toy = Toy::new(n).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &toy, |b, t| {
            b.iter(|| value_direct(&t.problem, 0.0, &X0, &t.xi, &t.catalog, &t.sim).unwrap())
        });
    }
    g.finish();
}

fn randomized(c: &mut Criterion) {
    let mut g = c.benchmark_group("value_randomized");
    g.sample_size(10);
    let toy = Toy::new(64).unwrap();
    g.bench_function("toy", |b| {
        b.iter(|| {
            value_randomized(&toy.problem, 0.0, &X0, &toy.xi, &toy.lambda, &toy.catalog, &toy.randomized, &toy.sim)
                .unwrap()
        })
    });
    g.finish();
}

fn penalized(c: &mut Criterion) {
    let toy = Toy::new(64).unwrap();
    let tree = toy.tree().unwrap();
    let mut g = c.benchmark_group("solve_penalized");
    for n in [1.0, 100.0] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| solve_penalized(black_box(n), &tree).unwrap())
        });
    }
    g.finish();
}

fn transport(c: &mut Criterion) {
    let mut g = c.benchmark_group("wasserstein2");
    for (n, dim) in [(32, 1), (32, 2), (64, 2)] {
        let mu = cloud(n, dim, 0.0).unwrap();
        let nu = cloud(n + 7, dim, 0.3).unwrap();
        g.bench_function(format!("n{n}_d{dim}"), |b| b.iter(|| wasserstein2(&mu, &nu).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, direct, randomized, penalized, transport);
criterion_main!(benches);
