use std::f64::consts::PI;
use std::hint::black_box;

use cgolab_core::cgo::{self, NeumannOptions};
use cgolab_core::fft::Direction;
use cgolab_core::multiplier::smooth_random_field;
use cgolab_core::*;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, n_time: usize) -> GridSpec {
    GridSpec::new(2, 2.0 * PI, n, 1.0, n_time, 4).unwrap()
}

fn fft(c: &mut Criterion) {
    let g = grid(32, 65);
    let u = smooth_random_field(&g, 20.0, 3.0, &mut ChaCha8Rng::seed_from_u64(1));
    c.bench_function("spacetime_fft_32x32x260", |b| {
        b.iter(|| black_box(u.transform(Direction::Forward).unwrap()))
    });
}

fn strang(c: &mut Criterion) {
    let g = grid(64, 129);
    let v = Potential::gaussian(g, 1.0, 1.0, &[0.0, 0.0]).unwrap().with_modulation(Modulation::raised_cosine());
    let f = SpatialField::from_fn(g, |x| Complex64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0));
    c.bench_function("strang_evolve_64x64_128_steps", |b| {
        b.iter(|| black_box(initial_to_final(&f, &v).unwrap()))
    });
}

fn multiplier(c: &mut Criterion) {
    let g = grid(32, 65);
    let u = smooth_random_field(&g, 20.0, 3.0, &mut ChaCha8Rng::seed_from_u64(2));
    let nu = [0.0, 8.0];
    let p = SymbolParams::cgo(&nu, 1e-8).unwrap();
    let shift = LatticeShift::half_along(&nu);
    c.bench_function("apply_s_32x32x260", |b| b.iter(|| black_box(apply_s(&p, &u, &shift).unwrap())));
}

fn neumann(c: &mut Criterion) {
    let g = grid(32, 65);
    let v = Potential::gaussian(g, 0.5, 1.0, &[0.0, 0.0]).unwrap();
    let psi = cgo::transverse_gaussian(&g, 1.0);
    let phase = cgo::make_phase(&[0.0, 8.0], 1).unwrap();
    let sharp = cgo::amplitude(&psi, &phase, &g).unwrap();
    let opts = NeumannOptions { max_iter: 1, ..NeumannOptions::default() };
    let mut group = c.benchmark_group("neumann");
    group.sample_size(10);
    group.bench_function("single_iteration_32x32x260", |b| {
        b.iter(|| black_box(cgo::solve_remainder(&v, &sharp, &psi, &phase, &opts).unwrap()))
    });
    group.finish();
}

criterion_group!(kernels, fft, strang, multiplier, neumann);
criterion_main!(kernels);
