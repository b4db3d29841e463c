use avqmetts_core::avqite::{compute_m, compute_v, evolve};
use avqmetts_core::model::{build_hamiltonian, build_pool};
use avqmetts_core::{Ansatz, AvqiteParams, Basis, Cps, IsingParams, Lattice, ThermalProblem, Walker};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn tangent(c: &mut Criterion) {
    let mut group = c.benchmark_group("tangent");
    let n = 10;
    let h = build_hamiltonian(&Lattice::chain(n, true).unwrap(), &IsingParams::tfim(1.0));
    let pool = build_pool(n).unwrap();
    for n_theta in [20usize, 80] {
        let mut ansatz = Ansatz::new(n, Cps::x(0));
        for k in 0..n_theta {
            ansatz.push(pool[(7 * k + 3) % pool.len()], 0.01 * k as f64).unwrap();
        }
        group.bench_with_input(BenchmarkId::new("m_and_v", n_theta), &n_theta, |b, _| {
            b.iter(|| (compute_m(&ansatz).unwrap(), compute_v(&ansatz, &h).unwrap()))
        });
    }
    group.finish();
}

fn thermal(c: &mut Criterion) {
    let mut group = c.benchmark_group("thermal");
    group.sample_size(10);
    let params = AvqiteParams::default();
    for n in [6usize, 8] {
        let h = build_hamiltonian(&Lattice::chain(n, true).unwrap(), &IsingParams::tfim(1.0));
        let pool = build_pool(n).unwrap();
        group.bench_with_input(BenchmarkId::new("evolve_x_beta1", n), &n, |b, _| {
            b.iter(|| evolve(Cps::x(0), &h, &pool, 0.5, &params).unwrap())
        });
        let problem = ThermalProblem { h: &h, pool: &pool, params: &params };
        let mut walker = Walker::new(n, 1, 0, Basis::X);
        group.bench_with_input(BenchmarkId::new("thermal_step_beta1", n), &n, |b, _| {
            b.iter(|| walker.thermal_step(problem, 1.0, true).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, tangent, thermal);
criterion_main!(benches);
