//! Synthetic ground truth: a damped fixed-end string and a noisy rigid rod.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{RngSeed, SpaceTimeField, SpatialGrid, StateSnapshot, StateTrajectory};
use crate::error::{Error, Result};
use crate::operator::{DphsOperator, StringEnergy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    HalfSinePluck { amplitude: f64 },
    /// Gaussian with its endpoint values removed by a linear correction so
    /// both ends start at zero.
    GaussianBump { center: f64, width: f64, amplitude: f64 },
}

impl InitialProfile {
    pub fn sample(&self, grid: &SpatialGrid) -> Vec<f64> {
        let (a, b, len) = (grid.z_min(), grid.z_max(), grid.length());
        let raw = |z: f64| match *self {
            InitialProfile::HalfSinePluck { amplitude } => {
                amplitude * (std::f64::consts::PI * (z - a) / len).sin()
            }
            InitialProfile::GaussianBump { center, width, amplitude } => {
                amplitude * (-0.5 * ((z - center) / width).powi(2)).exp()
            }
        };
        let (ra, rb) = (raw(a), raw(b));
        let mut s: Vec<f64> = grid
            .coords()
            .into_iter()
            .map(|z| raw(z) - ra - (rb - ra) * (z - a) / len)
            .collect();
        s[0] = 0.0;
        *s.last_mut().unwrap() = 0.0;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    #[serde(default = "one")]
    pub wave_speed_sq: f64,
    pub damping: f64,
    pub grid: SpatialGrid,
    pub dt: f64,
    pub n_steps: usize,
    pub initial_profile: InitialProfile,
}

fn one() -> f64 {
    1.0
}

impl WaveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.wave_speed_sq.is_finite() && self.wave_speed_sq > 0.0) {
            return Err(Error::config("wave_speed_sq must be positive"));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::config("damping must be >= 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) || self.n_steps == 0 {
            return Err(Error::config("dt must be positive and n_steps >= 1"));
        }
        let courant = self.wave_speed_sq.sqrt() * self.dt / self.grid.dz();
        if courant > 1.0 {
            return Err(Error::config(format!("CFL violated: courant number {courant:.4} > 1")));
        }
        Ok(())
    }

    /// Largest stable step for this grid and wave speed.
    pub fn cfl_dt(&self) -> f64 {
        self.grid.dz() / self.wave_speed_sq.sqrt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }
}

/// Everything the string simulator knows, not just the observed deflection.
#[derive(Debug, Clone)]
pub struct WaveRun {
    pub field: SpaceTimeField,
    /// Exact `(p, q)` states and their time derivatives.
    pub trajectory: StateTrajectory,
    pub energy: Vec<f64>,
}

/// Deflection of the damped string, one frame per step plus the initial one.
pub fn simulate_wave(params: &WaveParams) -> Result<SpaceTimeField> {
    simulate_wave_run(params).map(|r| r.field)
}

pub fn simulate_wave_run(params: &WaveParams) -> Result<WaveRun> {
    params.validate()?;
    let grid = params.grid;
    let n = grid.n_nodes();
    let op = DphsOperator::new(grid, params.damping)?;
    let energy_fn = StringEnergy::new(&grid, params.wave_speed_sq);

    let s0 = params.initial_profile.sample(&grid);
    let q0 = slope(&s0, grid.dz());
    // Augmented state [s; p; q] with ṡ = p.
    let mut y = DVector::zeros(3 * n);
    for i in 0..n {
        y[i] = s0[i];
        y[2 * n + i] = q0[i];
    }
    let rhs = |y: &DVector<f64>| -> DVector<f64> {
        let x = y.rows(n, 2 * n).into_owned();
        let xdot = energy_fn.field(&op, &x);
        let mut out = DVector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&x.rows(0, n));
        out.rows_mut(n, 2 * n).copy_from(&xdot);
        out
    };

    let frames = params.n_steps + 1;
    let mut values = DMatrix::zeros(frames, n);
    let mut states = Vec::with_capacity(frames);
    let mut derivs = Vec::with_capacity(frames);
    let mut energy = Vec::with_capacity(frames);
    for k in 0..frames {
        if k > 0 {
            y = rk4_step(&rhs, &y, params.dt);
            y[0] = 0.0;
            y[n - 1] = 0.0;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        values.set_row(k, &y.rows(0, n).transpose());
        let x = y.rows(n, 2 * n).into_owned();
        let snap = StateSnapshot::from_flat(&x)?;
        derivs.push(StateSnapshot::from_flat(&energy_fn.field(&op, &x))?);
        energy.push(energy_fn.energy(&snap));
        states.push(snap);
    }
    let times = params.times();
    Ok(WaveRun {
        field: SpaceTimeField::new(grid, times.clone(), values)?,
        trajectory: StateTrajectory::new(grid, times, states, Some(derivs))?,
        energy,
    })
}

/// Finite-difference slope: central inside, one-sided at the ends.
fn slope(s: &[f64], dz: f64) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| match i {
            0 => (s[1] - s[0]) / dz,
            _ if i + 1 == n => (s[n - 1] - s[n - 2]) / dz,
            _ => (s[i + 1] - s[i - 1]) / (2.0 * dz),
        })
        .collect()
}

pub(crate) fn rk4_step(
    f: &impl Fn(&DVector<f64>) -> DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (0.5 * dt)));
    let k3 = f(&(y + &k2 * (0.5 * dt)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidOscillatorParams {
    pub angular_freq: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub noise_std: f64,
    pub grid: SpatialGrid,
    pub dt: f64,
    pub n_steps: usize,
}

impl RigidOscillatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be >= 0"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) || self.n_steps == 0 {
            return Err(Error::config("dt must be positive and n_steps >= 1"));
        }
        if !(self.angular_freq.is_finite() && self.amplitude.is_finite()) {
            return Err(Error::config("angular_freq and amplitude must be finite"));
        }
        Ok(())
    }
}

/// Rod pinned at `z_min` swinging with phase `θ`, where white noise perturbs
/// the angular velocity before it is integrated into the phase.
pub fn simulate_rigid(params: &RigidOscillatorParams, seed: RngSeed) -> Result<SpaceTimeField> {
    params.validate()?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed.rng();
    let grid = params.grid;
    let arm: Vec<f64> = grid.coords().iter().map(|z| z - grid.z_min()).collect();
    let frames = params.n_steps + 1;
    let mut values = DMatrix::zeros(frames, grid.n_nodes());
    let mut theta = 0.0_f64;
    for k in 0..frames {
        if k > 0 {
            let omega = params.angular_freq + params.noise_std * normal.sample(&mut rng);
            theta += omega * params.dt;
        }
        let sin = theta.sin();
        for (j, a) in arm.iter().enumerate() {
            values[(k, j)] = params.amplitude * a * sin;
        }
    }
    let times = (0..frames).map(|k| k as f64 * params.dt).collect();
    SpaceTimeField::new(grid, times, values)
}

pub fn add_observation_noise(field: &SpaceTimeField, std: f64, seed: RngSeed) -> Result<SpaceTimeField> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::config(format!("noise std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(field.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = seed.rng();
    let mut values = field.values().clone();
    // Row-major draw order so the realization does not depend on storage layout.
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            values[(i, j)] += normal.sample(&mut rng);
        }
    }
    field.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(c: f64, n_steps: usize) -> WaveParams {
        WaveParams {
            wave_speed_sq: 1.0,
            damping: c,
            grid: SpatialGrid::unit(50).unwrap(),
            dt: 0.02,
            n_steps,
            initial_profile: InitialProfile::HalfSinePluck { amplitude: 0.1 },
        }
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let run = simulate_wave_run(&wave(0.0, 200)).unwrap();
        let e0 = run.energy[0];
        let drift = run.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
        assert!(drift < 1e-3, "drift {drift}");
    }

    #[test]
    fn damped_energy_decays_monotonically() {
        let run = simulate_wave_run(&wave(0.03, 200)).unwrap();
        assert!(run.energy.windows(2).all(|w| w[1] < w[0]));
        assert!(run.energy.last().unwrap() < &run.energy[0]);
    }

    #[test]
    fn zero_profile_stays_at_rest() {
        let mut p = wave(0.03, 50);
        p.initial_profile = InitialProfile::HalfSinePluck { amplitude: 0.0 };
        let f = simulate_wave(&p).unwrap();
        assert_eq!(f.values().amax(), 0.0);
    }

    #[test]
    fn ends_are_pinned() {
        let mut p = wave(0.03, 233);
        p.initial_profile = InitialProfile::GaussianBump { center: 0.3, width: 0.12, amplitude: 0.1 };
        let f = simulate_wave(&p).unwrap();
        assert_eq!(f.n_times(), 234);
        for i in 0..f.n_times() {
            assert_eq!(f.values()[(i, 0)], 0.0);
            assert_eq!(f.values()[(i, 49)], 0.0);
        }
    }

    #[test]
    fn cfl_is_enforced() {
        let mut p = wave(0.0, 10);
        p.dt = 0.05;
        assert!(matches!(simulate_wave(&p), Err(Error::Config(_))));
        p.dt = 0.02;
        p.damping = -0.1;
        assert!(simulate_wave(&p).is_err());
    }

    #[test]
    fn refinement_converges() {
        let coarse = simulate_wave(&wave(0.03, 100)).unwrap();
        let mut fine_p = wave(0.03, 200);
        fine_p.grid = SpatialGrid::unit(99).unwrap();
        fine_p.dt = 0.01;
        let fine = simulate_wave(&fine_p).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=100 {
            for j in 0..50 {
                let a = coarse.values()[(k, j)];
                let b = fine.values()[(2 * k, 2 * j)];
                num += (a - b).powi(2);
                den += b * b;
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.01, "relative rms {rel}");
    }

    fn rigid(noise: f64) -> RigidOscillatorParams {
        RigidOscillatorParams {
            angular_freq: std::f64::consts::PI,
            amplitude: 0.1,
            noise_std: noise,
            grid: SpatialGrid::unit(100).unwrap(),
            dt: 0.02,
            n_steps: 300,
        }
    }

    #[test]
    fn noiseless_rod_is_straight() {
        let f = simulate_rigid(&rigid(0.0), RngSeed(1)).unwrap();
        assert!(f.frame(0).iter().all(|&v| v == 0.0));
        let z = f.grid().coords();
        for k in 0..f.n_times() {
            let row = f.frame(k);
            // Straight line through the pinned end: slope from the last node.
            let slope = row[99] / z[99];
            let resid = (0..100).map(|j| (row[j] - slope * z[j]).abs()).fold(0.0, f64::max);
            assert!(resid < 1e-15, "frame {k}: {resid}");
        }
    }

    #[test]
    fn rigid_is_seed_deterministic() {
        let a = simulate_rigid(&rigid(0.5), RngSeed(3)).unwrap();
        let b = simulate_rigid(&rigid(0.5), RngSeed(3)).unwrap();
        let c = simulate_rigid(&rigid(0.5), RngSeed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(simulate_rigid(&rigid(-1.0), RngSeed(3)).is_err());
    }

    #[test]
    fn observation_noise_moments() {
        let clean = simulate_wave(&wave(0.03, 233)).unwrap();
        assert_eq!(add_observation_noise(&clean, 0.0, RngSeed(9)).unwrap(), clean);
        let noisy = add_observation_noise(&clean, 0.01, RngSeed(9)).unwrap();
        let diff = noisy.values() - clean.values();
        let m = diff.mean();
        let sd = (diff.map(|d| (d - m).powi(2)).sum() / (diff.len() - 1) as f64).sqrt();
        assert!((0.008..=0.012).contains(&sd), "sd {sd}");
        assert_eq!(add_observation_noise(&clean, 0.01, RngSeed(9)).unwrap(), noisy);
        assert!(add_observation_noise(&clean, -0.01, RngSeed(9)).is_err());
    }
}
