use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use ctw_bench::{delays, dot, noisy_field};
use ctw_core::averaging::{averaged_correlators, default_bunching_table};
use ctw_core::dynamics::{bpp_liouvillian, static_liouvillian, Regression};
use ctw_core::figures::{weak_hom_curves, HomInputs};
use ctw_core::montecarlo::{mc_correlators, EnsembleConfig};
use ctw_core::qcore::steady_state;

fn liouvillian(c: &mut Criterion) {
    let l = static_liouvillian(&dot(), 0.1, 0.0).unwrap();
    c.bench_function("liouvillian_exp", |b| b.iter(|| l.exp(black_box(3.7))));
    c.bench_function("steady_state", |b| b.iter(|| steady_state(black_box(&l)).unwrap()));
}

fn regression(c: &mut Criterion) {
    let reg = Regression::new(bpp_liouvillian(&dot(), &noisy_field()).unwrap()).unwrap();
    let grid = delays();
    c.bench_function("regression_g2_101", |b| b.iter(|| reg.g2_series(black_box(&grid)).unwrap()));
}

fn pseudo(c: &mut Criterion) {
    let (sys, field) = (dot(), noisy_field());
    let grid = [0.0, 5.0];
    c.bench_function("pseudo_adiabatic_two_delays", |b| {
        b.iter(|| averaged_correlators(&sys, &field, black_box(&grid), 12).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    let (sys, field) = (dot(), noisy_field());
    let cfg = EnsembleConfig::new(16, 7, delays());
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    g.bench_function("16_trajectories", |b| b.iter(|| mc_correlators(&sys, &field, black_box(&cfg), false).unwrap()));
    g.finish();
}

fn hom(c: &mut Criterion) {
    let inputs = HomInputs::compute(&dot(), 0.1, 43.0).unwrap();
    let table = default_bunching_table();
    c.bench_function("hom_weak_assembly", |b| {
        b.iter(|| weak_hom_curves(&inputs, black_box(20.0), 0.03, 4.0, &table).unwrap())
    });
}

criterion_group!(benches, liouvillian, regression, pseudo, monte_carlo, hom);
criterion_main!(benches);
