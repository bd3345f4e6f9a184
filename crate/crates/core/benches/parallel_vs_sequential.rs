//! Each workload runs twice: inside a one-thread pool, which matches what the
//! crate does when built with `--no-default-features`, and on the global
//! rayon pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graph_entropy::corner::{tau, CornerQuery};
use graph_entropy::model::{Graph, Problem, SetSystem};
use graph_entropy::optimality::{check_fixed_point, DEFAULT_CHECK_TOL};
use graph_entropy::oracle::brute_force_r;
use graph_entropy::solver::{solve, solve_batch, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn conditioned(g: Graph, ny: usize, seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.vertex_count();
    let mut joint: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..ny).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let total: f64 = joint.iter().flatten().sum();
    joint.iter_mut().flatten().for_each(|v| *v /= total);
    Problem::new(joint, SetSystem::Graph(g)).unwrap()
}

fn oracle_grid(c: &mut Criterion) {
    let p = conditioned(Graph::cycle(5), 1, 1);
    let mut group = c.benchmark_group("oracle_grid_c5");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| brute_force_r(&p, 2e-2).unwrap()))
        });
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let problems: Vec<Problem> = (0..128)
        .map(|i| conditioned(Graph::cycle(5 + i % 4), 3, i as u64))
        .collect();
    let cfg = SolverConfig {
        max_iters: 2000,
        ..SolverConfig::default()
    };
    let mut group = c.benchmark_group("solve_batch_128");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| solve_batch(&problems, &cfg)))
        });
    }
    group.finish();
}

fn optimality(c: &mut Criterion) {
    let p = conditioned(Graph::petersen(), 4, 2);
    let r = solve(&p, &SolverConfig::default()).unwrap().r_final;
    let mut group = c.benchmark_group("check_fixed_point_petersen");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| check_fixed_point(&p, &r, DEFAULT_CHECK_TOL).unwrap()))
        });
    }
    group.finish();
}

fn corner(c: &mut Criterion) {
    let p = conditioned(Graph::petersen(), 1, 3);
    let mut group = c.benchmark_group("tau_petersen");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| tau(&p, &CornerQuery::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, oracle_grid, batch, optimality, corner);
criterion_main!(benches);
