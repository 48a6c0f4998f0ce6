//! Fixed-step method-of-lines integration of learned or analytic dynamics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{SpaceTimeField, SpatialGrid, StateSnapshot, StateTrajectory};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::operator::trapezoid_weights;

/// Autonomous dynamics `ẋ = f(x)` on the stacked state.
pub trait VectorField: Sync {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl<F> VectorField for F
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self(x)
    }
}

/// A field known to be the gradient of a scalar potential.
pub trait GradientField: Sync {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Closed-form potential, when one is available.
    fn potential(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Method {
    #[default]
    #[serde(rename = "rk4")]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub method: Method,
    /// Re-pin the end momenta after each step.
    #[serde(default = "yes")]
    pub clamp_boundary: bool,
}

fn yes() -> bool {
    true
}

impl IntegratorConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        IntegratorConfig {
            dt,
            n_steps,
            method: Method::Rk4,
            clamp_boundary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be >= 1"));
        }
        Ok(())
    }
}

fn rk4(f: &impl VectorField, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = f.eval(x);
    let k2 = f.eval(&(x + &k1 * (0.5 * dt)));
    let k3 = f.eval(&(x + &k2 * (0.5 * dt)));
    let k4 = f.eval(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Integrates from `x0` at `t0`, returning `n_steps + 1` states with the
/// field evaluated at each as the derivative channel.
///
/// Clamping zeroes the momentum at the two end nodes; the slope channel is
/// left alone because a pinned string still has a slope at its ends.
pub fn integrate(
    field: &impl VectorField,
    x0: &StateSnapshot,
    t0: f64,
    grid: &SpatialGrid,
    cfg: &IntegratorConfig,
) -> Result<StateTrajectory> {
    cfg.validate()?;
    let n = grid.n_nodes();
    if x0.n_nodes() != n {
        return Err(Error::dim("initial state does not match the grid"));
    }
    let mut x = x0.flatten();
    let clamp = |x: &mut DVector<f64>| {
        if cfg.clamp_boundary {
            x[0] = 0.0;
            x[n - 1] = 0.0;
        }
    };
    clamp(&mut x);
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    let mut derivs = Vec::with_capacity(cfg.n_steps + 1);
    for step in 0..=cfg.n_steps {
        if step > 0 {
            x = rk4(field, &x, cfg.dt);
            clamp(&mut x);
        }
        let dx = field.eval(&x);
        if x.iter().chain(dx.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        states.push(StateSnapshot::from_flat(&x)?);
        derivs.push(StateSnapshot::from_flat(&dx)?);
    }
    let times = (0..=cfg.n_steps).map(|k| t0 + k as f64 * cfg.dt).collect();
    StateTrajectory::new(*grid, times, states, Some(derivs))
}

/// Integrates every member from the same start.
pub fn integrate_ensemble<F: VectorField>(
    fields: &[F],
    x0: &StateSnapshot,
    t0: f64,
    grid: &SpatialGrid,
    cfg: &IntegratorConfig,
    exec: Exec,
) -> Result<Vec<StateTrajectory>> {
    exec.map_slice(fields, |f| integrate(f, x0, t0, grid, cfg))
        .into_iter()
        .collect()
}

/// Deflection from the slope channel by cumulative trapezoid integration,
/// with `s = 0` at `z_min`.
pub fn predict_deflection(traj: &StateTrajectory) -> Result<SpaceTimeField> {
    if traj.is_empty() {
        return Err(Error::InsufficientData {
            what: "trajectory states",
            needed: 1,
            have: 0,
        });
    }
    let grid = traj.grid;
    let n = grid.n_nodes();
    let dz = grid.dz();
    let mut values = DMatrix::zeros(traj.len(), n);
    for (i, s) in traj.states.iter().enumerate() {
        let mut acc = 0.0;
        for j in 1..n {
            acc += 0.5 * dz * (s.q[j - 1] + s.q[j]);
            values[(i, j)] = acc;
        }
    }
    SpaceTimeField::new(grid, traj.times.clone(), values)
}

/// Per-entry mean and standard deviation across ensemble members.
pub fn ensemble_bands(members: &[SpaceTimeField]) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let first = members.first().ok_or_else(|| Error::Data("empty ensemble".into()))?;
    if members.iter().any(|m| m.values().shape() != first.values().shape()) {
        return Err(Error::dim("ensemble members differ in shape"));
    }
    let k = members.len() as f64;
    let mean = members.iter().fold(DMatrix::zeros(first.n_times(), first.grid().n_nodes()), |a, m| a + m.values()) / k;
    let var = members
        .iter()
        .fold(DMatrix::zeros(mean.nrows(), mean.ncols()), |a, m| a + (m.values() - &mean).map(|d| d * d))
        / k;
    Ok((first.with_values(mean)?, first.with_values(var.map(f64::sqrt))?))
}

/// Trapezoid-weighted spatial integral of one frame.
pub fn spatial_integral(grid: &SpatialGrid, values: &DVector<f64>) -> f64 {
    trapezoid_weights(grid).dot(values) * grid.dz()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DphsOperator, StringEnergy};
    use crate::simulate::{simulate_wave_run, InitialProfile, WaveParams};
    use std::f64::consts::PI;

    fn scalar_error(dt: f64) -> f64 {
        let grid = SpatialGrid::unit(3).unwrap();
        let x0 = StateSnapshot::from_flat(&DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let cfg = IntegratorConfig {
            clamp_boundary: false,
            ..IntegratorConfig::new(dt, (1.0 / dt).round() as usize)
        };
        let traj = integrate(&|x: &DVector<f64>| -x, &x0, 0.0, &grid, &cfg).unwrap();
        (traj.states.last().unwrap().p[1] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn decay_is_fourth_order() {
        let ratio = scalar_error(0.1) / scalar_error(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_field_is_stationary() {
        let grid = SpatialGrid::unit(4).unwrap();
        let x0 = StateSnapshot::from_flat(&DVector::from_vec(vec![0.0, 0.2, -0.1, 0.0, 1.0, 2.0, 3.0, 4.0])).unwrap();
        let traj = integrate(&|x: &DVector<f64>| DVector::zeros(x.len()), &x0, 0.0, &grid, &IntegratorConfig::new(0.1, 5)).unwrap();
        assert!(traj.states.iter().all(|s| s == &x0));
    }

    #[test]
    fn reproduces_the_simulator() {
        let params = WaveParams {
            wave_speed_sq: 1.0,
            damping: 0.03,
            grid: SpatialGrid::unit(50).unwrap(),
            dt: 0.02,
            n_steps: 100,
            initial_profile: InitialProfile::GaussianBump { center: 0.3, width: 0.12, amplitude: 0.1 },
        };
        let run = simulate_wave_run(&params).unwrap();
        let op = DphsOperator::new(params.grid, 0.03).unwrap();
        let energy = StringEnergy::new(&params.grid, 1.0);
        let truth = |x: &DVector<f64>| energy.field(&op, x);
        let traj = integrate(&truth, &run.trajectory.states[0], 0.0, &params.grid, &IntegratorConfig::new(0.02, 100)).unwrap();
        let mut se = 0.0;
        for (a, b) in traj.states.iter().zip(&run.trajectory.states) {
            se += (a.flatten() - b.flatten()).norm_squared();
        }
        assert!((se / (101.0 * 100.0)).sqrt() < 1e-4);
        let s = predict_deflection(&traj).unwrap();
        let rms = ((s.values() - run.field.values()).norm_squared() / s.values().len() as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn reconstructs_a_sine_from_its_slope() {
        let grid = SpatialGrid::unit(50).unwrap();
        let z = grid.coords();
        let q = DVector::from_iterator(50, z.iter().map(|z| PI * (PI * z).cos()));
        let traj = StateTrajectory::new(grid, vec![0.0], vec![StateSnapshot { p: DVector::zeros(50), q }], None).unwrap();
        let s = predict_deflection(&traj).unwrap();
        let rms = (z.iter().enumerate().map(|(j, z)| (s.values()[(0, j)] - (PI * z).sin()).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
        let flat = StateTrajectory::new(grid, vec![0.0], vec![StateSnapshot::zeros(50)], None).unwrap();
        assert_eq!(predict_deflection(&flat).unwrap().values().amax(), 0.0);
    }

    #[test]
    fn forward_then_backward_returns_home() {
        let grid = SpatialGrid::unit(20).unwrap();
        let op = DphsOperator::new(grid, 0.0).unwrap();
        let energy = StringEnergy::new(&grid, 1.0);
        let fwd = |x: &DVector<f64>| energy.field(&op, x);
        let bwd = |x: &DVector<f64>| -energy.field(&op, x);
        let z = grid.coords();
        let q = DVector::from_iterator(20, z.iter().map(|z| 0.1 * PI * (PI * z).cos()));
        let x0 = StateSnapshot { p: DVector::zeros(20), q };
        let cfg = IntegratorConfig::new(0.005, 100);
        let there = integrate(&fwd, &x0, 0.0, &grid, &cfg).unwrap();
        let back = integrate(&bwd, there.states.last().unwrap(), 0.0, &grid, &cfg).unwrap();
        let err = (back.states.last().unwrap().flatten() - x0.flatten()).norm() / (40f64).sqrt();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn divergence_reports_the_step() {
        let grid = SpatialGrid::unit(3).unwrap();
        let x0 = StateSnapshot::from_flat(&DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        let blowup = |x: &DVector<f64>| x.map(|v| v * v * 1e200);
        match integrate(&blowup, &x0, 0.0, &grid, &IntegratorConfig::new(1.0, 10)) {
            Err(Error::Divergence { step }) => assert!(step >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ensemble_is_partition_independent() {
        let grid = SpatialGrid::unit(10).unwrap();
        let fields: Vec<_> = (1..=6)
            .map(|k| move |x: &DVector<f64>| x * (-0.1 * k as f64))
            .collect();
        let x0 = StateSnapshot::from_flat(&DVector::from_element(20, 1.0)).unwrap();
        let cfg = IntegratorConfig::new(0.1, 20);
        let a = integrate_ensemble(&fields, &x0, 0.0, &grid, &cfg, Exec::Sequential).unwrap();
        let b = integrate_ensemble(&fields, &x0, 0.0, &grid, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let defl: Vec<_> = a.iter().map(|t| predict_deflection(t).unwrap()).collect();
        let (mean, sd) = ensemble_bands(&defl).unwrap();
        assert!(sd.values().iter().all(|&v| v >= 0.0));
        assert_eq!(mean.n_times(), 21);
    }
}
