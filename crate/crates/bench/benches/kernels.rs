use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use khop_core::graph::{Graph, KHopNetwork};
use khop_core::linalg::{sym_eig, Matrix};
use khop_core::scenario::Scenario;
use khop_core::sim::{step, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [4, 16, 48] {
        let data: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Matrix::from_row_major(n, n, data).unwrap().symmetric_part().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| sym_eig(black_box(m)).unwrap()));
    }
    group.finish();
}

fn couplings(c: &mut Criterion) {
    let mut group = c.benchmark_group("khop_network");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [16, 64] {
        let g = Graph::random_connected(n, 3.0 / n as f64, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| KHopNetwork::new(black_box(g.clone()), 3).unwrap())
        });
    }
    group.finish();
}

fn simulation_step(c: &mut Criterion) {
    let p = Scenario::reproduction().prepare().unwrap();
    let world = World::initial(&p.sim).unwrap();
    c.bench_function("step/four_agents", |b| {
        b.iter_batched(
            || world.clone(),
            |mut w| step(&p.sim, &mut w).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, eigen, couplings, simulation_step);
criterion_main!(benches);
