use criterion::{black_box, criterion_group, criterion_main, Criterion};
use magsteer_bench::{conditional, measured, params};
use magsteer_core::stochastic::{simulate_trajectory, ConditionalCov, TrajectoryOptions};
use magsteer_core::{
    build_diffusion, build_drift, check_stability, compute_measures, ensemble_covariance_from, fidelity,
    numeric_threshold, solve_lyapunov, steady_conditional, FeedbackGains, MpaKind,
};

fn solvers(c: &mut Criterion) {
    let p = params();
    let (a, d) = (build_drift(&p), build_diffusion(&p));
    c.bench_function("lyapunov", |b| b.iter(|| solve_lyapunov(black_box(&a), black_box(&d)).unwrap()));
    let mats = measured();
    c.bench_function("steady_conditional", |b| b.iter(|| steady_conditional(black_box(&mats)).unwrap()));
    c.bench_function("stability", |b| b.iter(|| check_stability(black_box(&mats))));
    c.bench_function("numeric_threshold", |b| {
        b.iter(|| numeric_threshold(black_box(&p), MpaKind::Symmetric, 1e-9).unwrap())
    });
}

fn measures(c: &mut Criterion) {
    let sigma = conditional();
    let mats = measured();
    let gains = FeedbackGains::right_port(1e9, 2e9);
    let ens = ensemble_covariance_from(&mats, &sigma, &gains).unwrap();
    c.bench_function("measures", |b| b.iter(|| compute_measures(black_box(&sigma)).unwrap()));
    c.bench_function("fidelity", |b| b.iter(|| fidelity(black_box(&sigma), black_box(&ens.ensemble)).unwrap()));
    c.bench_function("ensemble_covariance", |b| {
        b.iter(|| ensemble_covariance_from(black_box(&mats), black_box(&sigma), &gains).unwrap())
    });
}

fn trajectory(c: &mut Criterion) {
    let sigma = conditional();
    let mats = measured();
    let gains = FeedbackGains::right_port(1e8, 1e8);
    let dt = 1e-3 / mats.max_linewidth();
    let opts = TrajectoryOptions::default();
    c.bench_function("trajectory_10k_steps", |b| {
        b.iter(|| {
            simulate_trajectory(&mats, ConditionalCov::Steady(&sigma), Some(&gains), dt, 1e4 * dt, black_box(3), &opts).unwrap()
        })
    });
}

criterion_group!(benches, solvers, measures, trajectory);
criterion_main!(benches);
