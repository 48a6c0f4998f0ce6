//! Sequential vs rayon execution of the data-parallel hot loops.
//!
//! Build without default features to time the sequential fallback alone:
//! `cargo bench -p pnp-core --no-default-features`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pnp_core::conformal::coverage_experiment;
use pnp_core::gpdphs::{kernel_matrix, GpDphsModel, KernelParams};
use pnp_core::integrate::{integrate_ensemble, IntegratorConfig};
use pnp_core::operator::DphsOperator;
use pnp_core::simulate::{simulate_wave_run, InitialProfile, WaveParams};
use pnp_core::{Exec, RngSeed, SpatialGrid, StateTrajectory};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn training_states(n_nodes: usize, n_states: usize) -> StateTrajectory {
    let params = WaveParams {
        wave_speed_sq: 1.0,
        damping: 0.03,
        grid: SpatialGrid::unit(n_nodes).unwrap(),
        dt: 0.02,
        n_steps: 200,
        initial_profile: InitialProfile::GaussianBump {
            center: 0.3,
            width: 0.12,
            amplitude: 0.1,
        },
    };
    let run = simulate_wave_run(&params).unwrap();
    let idx: Vec<usize> = (0..n_states).map(|i| 8 + i * (180 / n_states)).collect();
    run.trajectory.select(&idx).unwrap()
}

fn kernel_assembly(c: &mut Criterion) {
    let traj = training_states(30, 12);
    let params = KernelParams::default();
    let op = DphsOperator::new(traj.grid, params.damping).unwrap();
    let x = traj.state_matrix();
    let mut group = c.benchmark_group("kernel_matrix");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| kernel_matrix(&params, &op, black_box(&x), &x, exec).unwrap())
        });
    }
    group.finish();
}

fn conformal_trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("coverage_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| coverage_experiment(99, 0.1, 1_000, black_box(64), RngSeed(1), exec).unwrap())
        });
    }
    group.finish();
}

fn ensemble_rollout(c: &mut Criterion) {
    let traj = training_states(20, 8);
    let model = GpDphsModel::condition(KernelParams::default(), traj.grid, &traj, Exec::Sequential).unwrap();
    let draws: Vec<_> = (0..8)
        .map(|r| model.sample_field(RngSeed(3).fork(r), 128).unwrap())
        .collect();
    let cfg = IntegratorConfig::new(0.01, 20);
    let x0 = &traj.states[0];
    let mut group = c.benchmark_group("integrate_ensemble");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| integrate_ensemble(black_box(&draws), x0, 0.0, &traj.grid, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_assembly, conformal_trials, ensemble_rollout);
criterion_main!(benches);
