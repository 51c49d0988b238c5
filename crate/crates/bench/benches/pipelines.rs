//! Benchmarks for the hot paths: matrix-product iteration, QR rate
//! estimation, certificate search, transport construction, and the
//! density pullback.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use stocycle::accessibility::transport;
use stocycle::domination::contracting_case;
use stocycle::linalg::{random_stochastic, RowProfile};
use stocycle::lyapunov::{lyapunov_qr, QrOptions};
use stocycle::transfer::solve_density;
use stocycle::{
    seeded_rng, BasePoint, BaseSystem, CocycleSpec, Generator, PartitionFamily, ProjectionPair,
    WeightGenerator, WeightMatrix,
};

fn tabulated_cycle(n: usize, q: usize, seed: u64) -> CocycleSpec {
    let mut rng = seeded_rng(seed);
    let matrices = (0..q).map(|_| random_stochastic(n, &mut rng, RowProfile::Uniform)).collect();
    CocycleSpec::new(BaseSystem::cycle(q), Generator::Tabulated { matrices }).unwrap()
}

fn bench_products(c: &mut Criterion) {
    let mut group = c.benchmark_group("products");
    for &n in &[4usize, 8, 16] {
        let spec = tabulated_cycle(n, 4, 7);
        group.bench_function(format!("iterate_50_n{n}"), |b| {
            b.iter(|| spec.iterate(black_box(&BasePoint::Cycle(0)), 50).unwrap())
        });
        let proj = ProjectionPair::new(n);
        group.bench_function(format!("iterate_normal_50_n{n}"), |b| {
            b.iter(|| spec.iterate_normal(&proj, black_box(&BasePoint::Cycle(0)), 50).unwrap())
        });
    }
    group.finish();
}

fn bench_lyapunov(c: &mut Criterion) {
    let mut rng = seeded_rng(11);
    let spec = CocycleSpec::new(
        BaseSystem::golden_rotation(),
        Generator::LocallyConstant {
            cuts: vec![0.0, 0.5],
            matrices: vec![
                random_stochastic(4, &mut rng, RowProfile::Uniform),
                random_stochastic(4, &mut rng, RowProfile::Uniform),
            ],
        },
    )
    .unwrap();
    let opts = QrOptions::default();
    c.bench_function("lyapunov/qr_2000_steps_n4", |b| {
        b.iter(|| lyapunov_qr(&spec, black_box(&BasePoint::Circle(0.2)), 2000, 1, &opts).unwrap())
    });
}

fn bench_domination(c: &mut Criterion) {
    let spec = tabulated_cycle(4, 4, 23);
    c.bench_function("domination/contracting_case_n4_q4", |b| {
        b.iter(|| contracting_case(&spec, black_box(&BasePoint::Cycle(0)), 16).unwrap())
    });
}

fn bench_transport(c: &mut Criterion) {
    // Pre-drawn direction pairs so the benchmark measures only the
    // carrier construction.
    let n = 4;
    let mut rng = seeded_rng(3);
    let proj = ProjectionPair::new(n);
    let mut pairs = Vec::new();
    use rand::Rng as _;
    while pairs.len() < 100 {
        let raw = nalgebra::DVector::from_fn(n - 1, |_, _| rng.random::<f64>() - 0.5);
        if raw.norm() < 1e-3 {
            continue;
        }
        let v = proj.normal_to_ambient(&raw);
        let v = &v / v.norm();
        pairs.push((v.clone(), v));
    }
    let eps = 1e-4;
    c.bench_function("transport/batch_100_n4", |b| {
        b.iter(|| {
            for (v, w) in &pairs {
                black_box(transport(v, w, eps).unwrap());
            }
        })
    });
}

fn bench_density(c: &mut Criterion) {
    let n = 3;
    let raw = DMatrix::from_fn(n, n, |i, j| 1.0 + 0.3 * ((i * n + j) as f64 / (n * n) as f64));
    let total: f64 = raw.iter().sum();
    let pf = PartitionFamily::new(
        BaseSystem::golden_rotation(),
        WeightGenerator::Constant { matrix: WeightMatrix::new(raw / total).unwrap() },
    )
    .unwrap();
    c.bench_function("transfer/solve_density_depth200_n3", |b| {
        b.iter(|| solve_density(&pf, black_box(&BasePoint::Circle(0.4)), 200).unwrap())
    });
}

criterion_group!(
    benches,
    bench_products,
    bench_lyapunov,
    bench_domination,
    bench_transport,
    bench_density
);
criterion_main!(benches);
