use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use frailtime_core::inference::hessian_diag;
use frailtime_core::likelihood::log_comb_sum;
use frailtime_core::simulate::{simulate_dataset, truth_vector, CovariateSpec, SimSpec};
use frailtime_core::{fit, FitOptions, LikelihoodContext, TimeGrid, DEFAULT_CATEGORY_MAX, DEFAULT_CATEGORY_MIN};
use std::hint::black_box;

fn spec(n_groups: usize, units: usize, l: usize) -> SimSpec {
    let axis: Vec<f64> = (0..=l).map(|k| k as f64 * 0.5).collect();
    SimSpec {
        truth: truth_vector(&vec![-1.0; l], &[0.2, -1.2], 0.4, 0.3, &vec![0.2; l]).unwrap(),
        grid: TimeGrid::new(axis).unwrap(),
        units_per_group: vec![units; n_groups],
        covariates: vec!["gender:bernoulli(0.5)".parse::<CovariateSpec>().unwrap(), "cfup:normal".parse().unwrap()],
        frailty_override: None,
        seed: 1,
    }
}

fn loglik(c: &mut Criterion) {
    let mut group = c.benchmark_group("loglik");
    // up to 16 groups, ~4450 units, 10 intervals
    for &(n_groups, units) in &[(4usize, 50usize), (16, 100), (16, 278)] {
        let sim = simulate_dataset(&spec(n_groups, units, 10)).unwrap();
        let ctx = LikelihoodContext::new(sim.to_dataset(), sim.truth.time_axis.clone()).unwrap();
        let p = sim.truth.params.clone();
        group.bench_with_input(BenchmarkId::from_parameter(n_groups * units), &p, |b, p| {
            b.iter(|| ctx.loglik_values(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn comb_sum(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_comb_sum");
    for d in [1usize, 20, 200] {
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            b.iter(|| log_comb_sum(black_box(d), 1.3, 0.4, 12.0, 40.0, 3.3, 5.0).unwrap())
        });
    }
    group.finish();
}

fn hessian(c: &mut Criterion) {
    let sim = simulate_dataset(&spec(16, 100, 10)).unwrap();
    let ctx = LikelihoodContext::new(sim.to_dataset(), sim.truth.time_axis.clone()).unwrap();
    let p = sim.truth.params.clone();
    c.bench_function("hessian_diag/1600", |b| b.iter(|| hessian_diag(&ctx, black_box(&p), 1e-3)));
}

fn full_fit(c: &mut Criterion) {
    let sim = simulate_dataset(&spec(10, 40, 4)).unwrap();
    let options = FitOptions { seed: 3, n_extrarun: 10, ..FitOptions::default() };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("400 units, L=4", |b| {
        b.iter(|| {
            fit(sim.to_dataset(), sim.truth.time_axis.clone(), DEFAULT_CATEGORY_MIN, DEFAULT_CATEGORY_MAX, &options)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, loglik, comb_sum, hessian, full_fit);
criterion_main!(benches);
