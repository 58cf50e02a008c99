use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ivdc_core::model::LikelihoodData;
use ivdc_core::numerics::binorm_cdf;
use ivdc_core::simulation::{generate_dataset, DesignId, SimulationDesign};
use ivdc_core::FirstStageFamily;

fn binorm(c: &mut Criterion) {
    c.bench_function("binorm_cdf", |b| {
        b.iter(|| binorm_cdf(black_box(0.3), black_box(-1.2), black_box(0.75)).unwrap())
    });
    c.bench_function("binorm_cdf_tail", |b| {
        b.iter(|| binorm_cdf(black_box(-6.0), black_box(-5.5), black_box(0.95)).unwrap())
    });
}

fn likelihood(c: &mut Criterion) {
    let design = SimulationDesign::new(DesignId::Four, 1000).with_seed(1);
    let (data, _) = generate_dataset(&design, 0).unwrap();
    let ld = LikelihoodData::with_control(&data, FirstStageFamily::Logit, &design.gamma_true).unwrap();
    let theta = design.theta_true.to_vec();
    let mut grad = vec![0.0; theta.len()];
    c.bench_function("loglik_n1000", |b| b.iter(|| ld.log_likelihood(black_box(&theta))));
    c.bench_function("loglik_grad_n1000", |b| {
        b.iter(|| ld.log_likelihood_grad(black_box(&theta), &mut grad))
    });
}

criterion_group!(benches, binorm, likelihood);
criterion_main!(benches);
