use std::hint::black_box;
use std::time::{Duration, Instant};

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use surfns::galerkin::galerkin_basis;
use surfns::par;
use surfns::random::FieldSampler;
use surfns::surfcalc::run_identity_suite;
use surfns::thinfilm::{BulkVector, ThinDomainSpec};
use surfns::{SurfaceGrid, WeightField};

// pool sizes to compare: the full pool and a single worker
fn pools() -> Vec<usize> {
    let all = par::current_threads();
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

// times `iters` calls of `f` on a pool of `threads` workers; the pool is
// built outside the measurement
fn timed<R: Send>(threads: usize, iters: u64, f: impl Fn() -> R + Sync + Send) -> Duration {
    par::with_threads(threads, || {
        let t = Instant::now();
        for _ in 0..iters {
            black_box(f());
        }
        t.elapsed()
    })
}

fn bench_kernels(c: &mut Criterion) {
    let sphere = SurfaceGrid::sphere(1.0, 32).unwrap();
    let torus = SurfaceGrid::torus(2.0, 1.0, 64, 64).unwrap();
    let v = FieldSampler::new(&sphere, 1, 10).tangent();
    let g0 = sphere.scalar_from_fn(|_| 0.0);
    let g1 = sphere.scalar_from_fn(|y| 1.0 + 0.15 * (3.0 * y.z * y.z - 1.0));
    let spec = ThinDomainSpec::new(&sphere, &g0, &g1, 0.05, 16).unwrap();
    let coeffs = vec![v.values().to_vec(), v.values().to_vec()];
    let small = SurfaceGrid::sphere(1.0, 16).unwrap();
    let one = WeightField::from_field(small.scalar(vec![1.0; small.len()]).unwrap()).unwrap();

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for threads in pools() {
        group.bench_with_input(BenchmarkId::new("grad_matrix_sphere32", threads), &threads, |b, &n| {
            b.iter_custom(|iters| timed(n, iters, || sphere.grad_matrix_raw(v.values())))
        });
        group.bench_with_input(BenchmarkId::new("identity_suite_torus64", threads), &threads, |b, &n| {
            b.iter_custom(|iters| timed(n, iters, || run_identity_suite(&torus, 7).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("thin_bulk_field", threads), &threads, |b, &n| {
            b.iter_custom(|iters| timed(n, iters, || BulkVector::radial_polynomial(&spec, &coeffs)))
        });
        group.bench_with_input(BenchmarkId::new("galerkin_basis_k20", threads), &threads, |b, &n| {
            b.iter_custom(|iters| timed(n, iters, || galerkin_basis(&small, 0.1, 0.0, &one, 20).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
