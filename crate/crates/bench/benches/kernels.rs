use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use levy_lp::cz::{cz_decompose, maximal_function, MaximalMode, SpaceTimeGrid};
use levy_lp::density::density_on;
use levy_lp::estimates::function_bank;
use levy_lp::measure::build_stable;
use levy_lp::operators::{apply_levy_direct, apply_levy_spectral};
use levy_lp::scaling::ScalingFunction;
use levy_lp::simulate::{sample_paths, SimParams};
use levy_lp::solve::{solve_parabolic_spectral, uniform_times, ProblemSpec};
use levy_lp::symbol::{evaluate, evaluate_on, FreqGrid};

fn symbol(c: &mut Criterion) {
    let mut g = c.benchmark_group("symbol_lattice");
    for sigma in [0.5, 1.5] {
        let spec = build_stable(1, sigma, 1.0).unwrap();
        let grid = FreqGrid::Lattice {
            dim: 1,
            n: 4096,
            period: 64.0,
        };
        g.bench_with_input(BenchmarkId::from_parameter(sigma), &grid, |b, grid| {
            b.iter(|| evaluate(black_box(&spec), grid).unwrap())
        });
    }
    g.finish();
}

fn operators(c: &mut Criterion) {
    let spec = build_stable(1, 1.5, 1.0).unwrap();
    let u = function_bank(1, 256, 8.0, 1, 3).unwrap().remove(0);
    let table = evaluate_on(&spec, &u).unwrap();
    c.bench_function("apply_spectral_n256", |b| {
        b.iter(|| apply_levy_spectral(&table, black_box(&u)).unwrap())
    });
    let h = 8.0 / 256.0;
    c.bench_function("apply_direct_n256", |b| {
        b.iter(|| apply_levy_direct(&spec, black_box(&u), 2.0 * h).unwrap())
    });
}

fn density(c: &mut Criterion) {
    let spec = build_stable(1, 0.5, 1.0).unwrap();
    c.bench_function("density_n4096", |b| {
        b.iter(|| density_on(&spec, black_box(1.0), 4096, 512.0, 1).unwrap())
    });
}

fn simulate(c: &mut Criterion) {
    let spec = build_stable(1, 1.5, 1.0).unwrap();
    let p = SimParams::new(1.0, 10_000, 1e-2, 7);
    c.bench_function("sample_paths_1e4", |b| {
        b.iter(|| sample_paths(&spec, black_box(&p)).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let spec = build_stable(1, 1.5, 1.0).unwrap();
    let f = function_bank(1, 256, 8.0, 1, 5).unwrap().remove(0);
    let table = evaluate_on(&spec, &f).unwrap();
    let ps = ProblemSpec::parabolic_static(spec, 0.5, 1.0, f).unwrap();
    let times = uniform_times(1.0, 32);
    c.bench_function("parabolic_spectral_n256", |b| {
        b.iter(|| solve_parabolic_spectral(black_box(&ps), &table, &times).unwrap())
    });
}

fn cz(c: &mut Criterion) {
    let sf = ScalingFunction::stable(1.0, 1.0, 1.0);
    let n = 64;
    let h = 1.0 / n as f64;
    let mut g = SpaceTimeGrid::zeros(1, 0.0, h, n, 0.0, h, n).unwrap();
    let i = g.ravel(&[n / 2, n / 2]);
    g.values[i] = 1.0 / g.cell_measure();
    let deltas: Vec<f64> = (0..12).map(|k| 0.005 * 1.5f64.powi(k)).collect();
    c.bench_function("maximal_centered_64x64", |b| {
        b.iter(|| {
            maximal_function(black_box(&g), &sf.kappa, &deltas, MaximalMode::Centered).unwrap()
        })
    });
    c.bench_function("cz_decompose_spike_64x64", |b| {
        b.iter(|| cz_decompose(black_box(&g), 4.0, &sf, true).unwrap())
    });
}

criterion_group!(benches, symbol, operators, density, simulate, solve, cz);
criterion_main!(benches);
