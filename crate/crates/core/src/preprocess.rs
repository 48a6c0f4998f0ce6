//! Denoising and differentiation of observed deflection fields.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::domain::{SpaceTimeField, SpatialGrid, StateSnapshot, StateTrajectory};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::optim::{self, AdamConfig};

/// Largest field the surface GP will condition on.
pub const SURFACE_SAMPLE_BUDGET: usize = 20_000;
const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub kalman_process_var: f64,
    pub kalman_obs_var: f64,
    pub gp_lengthscale_t: f64,
    pub gp_lengthscale_z: f64,
    pub gp_signal_var: f64,
    pub gp_noise_var: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Refine the GP hyperparameters by marginal likelihood before use.
    #[serde(default)]
    pub optimize_hyperparams: bool,
    #[serde(default)]
    pub optimizer: AdamConfig,
}

fn default_jitter() -> f64 {
    1e-8
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            kalman_process_var: 50.0,
            kalman_obs_var: 1e-6,
            gp_lengthscale_t: 0.2,
            gp_lengthscale_z: 0.2,
            gp_signal_var: 0.01,
            gp_noise_var: 1e-6,
            jitter: default_jitter(),
            optimize_hyperparams: false,
            optimizer: AdamConfig::default(),
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kalman_process_var", self.kalman_process_var),
            ("kalman_obs_var", self.kalman_obs_var),
            ("gp_lengthscale_t", self.gp_lengthscale_t),
            ("gp_lengthscale_z", self.gp_lengthscale_z),
            ("gp_signal_var", self.gp_signal_var),
            ("gp_noise_var", self.gp_noise_var),
            ("jitter", self.jitter),
        ];
        match positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, v)) => Err(Error::config(format!("{name} must be positive, got {v}"))),
            None => Ok(()),
        }
    }
}

/// Per-node constant-velocity Kalman filter followed by an RTS smoother.
pub fn kalman_smooth(field: &SpaceTimeField, cfg: &SmootherConfig) -> Result<SpaceTimeField> {
    cfg.validate()?;
    if field.n_times() < 2 {
        return Err(Error::InsufficientData {
            what: "time frames",
            needed: 2,
            have: field.n_times(),
        });
    }
    let values = field.values();
    let cols = Exec::default().map_range(values.ncols(), |j| {
        let y: Vec<f64> = values.column(j).iter().copied().collect();
        smooth_series(field.times(), &y, cfg.kalman_process_var, cfg.kalman_obs_var)
    });
    let out = DMatrix::from_fn(values.nrows(), values.ncols(), |i, j| cols[j][i]);
    field.with_values(out)
}

fn smooth_series(times: &[f64], y: &[f64], qv: f64, r: f64) -> Vec<f64> {
    let n = y.len();
    let transition = |dt: f64| Matrix2::new(1.0, dt, 0.0, 1.0);
    let noise = |dt: f64| {
        qv * Matrix2::new(dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt)
    };
    let mut xf = Vec::with_capacity(n);
    let mut pf = Vec::with_capacity(n);
    let mut xp = Vec::with_capacity(n);
    let mut pp = Vec::with_capacity(n);
    let mut x = Vector2::new(y[0], 0.0);
    let mut p = Matrix2::new(r, 0.0, 0.0, 1e6);
    for k in 0..n {
        if k > 0 {
            let dt = times[k] - times[k - 1];
            let f = transition(dt);
            x = f * x;
            p = f * p * f.transpose() + noise(dt);
        }
        xp.push(x);
        pp.push(p);
        let s = p[(0, 0)] + r;
        let gain = p.column(0) / s;
        x += gain * (y[k] - x[0]);
        p -= gain * p.row(0);
        p = (p + p.transpose()) * 0.5;
        xf.push(x);
        pf.push(p);
    }
    let mut xs = xf[n - 1];
    let mut out = vec![0.0; n];
    out[n - 1] = xs[0];
    for k in (0..n - 1).rev() {
        let f = transition(times[k + 1] - times[k]);
        let g = match pp[k + 1].try_inverse() {
            Some(inv) => pf[k] * f.transpose() * inv,
            None => Matrix2::zeros(),
        };
        xs = xf[k] + g * (xs - xp[k + 1]);
        out[k] = xs[0];
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceHyper {
    pub lengthscale_t: f64,
    pub lengthscale_z: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl SurfaceHyper {
    fn to_log(self) -> [f64; 4] {
        [
            self.lengthscale_t.ln(),
            self.lengthscale_z.ln(),
            self.signal_var.ln(),
            self.noise_var.ln(),
        ]
    }

    fn from_log(v: &[f64]) -> Self {
        SurfaceHyper {
            lengthscale_t: v[0].exp(),
            lengthscale_z: v[1].exp(),
            signal_var: v[2].exp(),
            noise_var: v[3].exp(),
        }
    }
}

/// Squared-exponential kernel differentiated `order` times in its first argument.
fn se(a: f64, b: f64, ell: f64, order: u8) -> f64 {
    let r = a - b;
    let l2 = ell * ell;
    let k = (-0.5 * r * r / l2).exp();
    match order {
        0 => k,
        1 => -r / l2 * k,
        2 => (r * r / (l2 * l2) - 1.0 / l2) * k,
        _ => unreachable!("only up to second derivatives are used"),
    }
}

/// Covariance of the time derivative of the SE surface with itself,
/// `∂²k/∂t∂t'`, evaluated at `(t, t')` on a fixed spatial location.
pub fn time_derivative_covariance(hyper: &SurfaceHyper, t: f64, t2: f64) -> f64 {
    // ∂/∂t' of the first-argument derivative is minus the second derivative.
    -hyper.signal_var * se(t, t2, hyper.lengthscale_t, 2)
}

fn gram(x: &[f64], ell: f64) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x.len(), |i, j| se(x[i], x[j], ell, 0))
}

fn cross(q: &[f64], x: &[f64], ell: f64, order: u8) -> DMatrix<f64> {
    DMatrix::from_fn(q.len(), x.len(), |i, j| se(q[i], x[j], ell, order))
}

/// Affine trend `a + b·t + c·z` removed before GP conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Trend {
    offset: f64,
    per_time: f64,
    per_length: f64,
}

impl Trend {
    fn fit(times: &[f64], z: &[f64], y: &DMatrix<f64>) -> Self {
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut aty = nalgebra::Vector3::<f64>::zeros();
        for (i, &t) in times.iter().enumerate() {
            for (j, &zz) in z.iter().enumerate() {
                let row = nalgebra::Vector3::new(1.0, t, zz);
                ata += row * row.transpose();
                aty += row * y[(i, j)];
            }
        }
        let coef = ata
            .lu()
            .solve(&aty)
            .unwrap_or_else(nalgebra::Vector3::zeros);
        Trend {
            offset: coef[0],
            per_time: coef[1],
            per_length: coef[2],
        }
    }

    fn value(&self, t: f64, z: f64, dt: u8, dz: u8) -> f64 {
        match (dt, dz) {
            (0, 0) => self.offset + self.per_time * t + self.per_length * z,
            (1, 0) => self.per_time,
            (0, 1) => self.per_length,
            _ => 0.0,
        }
    }
}

/// Exact GP on a full space-time grid with a separable SE kernel.
///
/// The covariance `σ² K_t ⊗ K_z + σₙ² I` is diagonalized through the two
/// factor eigendecompositions, which is exact and avoids a dense solve.
#[derive(Debug, Clone)]
pub struct SurfaceGp {
    hyper: SurfaceHyper,
    jitter: f64,
    grid: SpatialGrid,
    times: Vec<f64>,
    trend: Trend,
    alpha: DMatrix<f64>,
    nlml: f64,
    min_eigenvalue: f64,
    trace: f64,
}

struct KronSolve {
    alpha: DMatrix<f64>,
    nlml: f64,
    min_eigenvalue: f64,
    trace: f64,
    jitter: f64,
}

fn kron_solve(
    times: &[f64],
    z: &[f64],
    resid: &DMatrix<f64>,
    hyper: &SurfaceHyper,
    jitter: f64,
) -> Result<KronSolve> {
    let et = SymmetricEigen::new(gram(times, hyper.lengthscale_t));
    let ez = SymmetricEigen::new(gram(z, hyper.lengthscale_z));
    let signal: DMatrix<f64> = DMatrix::from_fn(times.len(), z.len(), |i, j| {
        hyper.signal_var * et.eigenvalues[i] * ez.eigenvalues[j]
    });
    let min_signal = signal.min();
    let mut jit = jitter;
    for attempt in 0..=JITTER_ESCALATIONS {
        let min_eig = min_signal + hyper.noise_var + jit;
        if min_eig > 0.0 {
            let rotated = et.eigenvectors.transpose() * resid * &ez.eigenvectors;
            let lam = signal.map(|s| s + hyper.noise_var + jit);
            let scaled = rotated.component_div(&lam);
            let alpha = &et.eigenvectors * &scaled * ez.eigenvectors.transpose();
            let m = resid.len() as f64;
            let fit = rotated.component_mul(&scaled).sum();
            let log_det: f64 = lam.iter().map(|l| l.ln()).sum();
            return Ok(KronSolve {
                alpha,
                nlml: 0.5 * fit + 0.5 * log_det + 0.5 * m * (2.0 * std::f64::consts::PI).ln(),
                min_eigenvalue: min_eig,
                trace: signal.sum() + m * (hyper.noise_var + jit),
                jitter: jit,
            });
        }
        if attempt < JITTER_ESCALATIONS {
            jit = if jit > 0.0 { jit * 10.0 } else { 1e-10 };
        }
    }
    Err(Error::Conditioning(format!(
        "surface covariance not positive definite after {JITTER_ESCALATIONS} jitter escalations (jitter {jit:e})"
    )))
}

pub fn fit_surface_gp(field: &SpaceTimeField, cfg: &SmootherConfig) -> Result<SurfaceGp> {
    cfg.validate()?;
    let samples = field.n_times() * field.grid().n_nodes();
    if samples > SURFACE_SAMPLE_BUDGET {
        return Err(Error::config(format!(
            "surface GP budget is {SURFACE_SAMPLE_BUDGET} samples, field has {samples}; subsample first"
        )));
    }
    let times = field.times().to_vec();
    let z = field.grid().coords();
    let trend = Trend::fit(&times, &z, field.values());
    let resid = DMatrix::from_fn(times.len(), z.len(), |i, j| {
        field.values()[(i, j)] - trend.value(times[i], z[j], 0, 0)
    });
    let mut hyper = SurfaceHyper {
        lengthscale_t: cfg.gp_lengthscale_t,
        lengthscale_z: cfg.gp_lengthscale_z,
        signal_var: cfg.gp_signal_var,
        noise_var: cfg.gp_noise_var,
    };
    if cfg.optimize_hyperparams {
        let objective = |v: &[f64]| {
            kron_solve(&times, &z, &resid, &SurfaceHyper::from_log(v), cfg.jitter).map(|s| s.nlml)
        };
        let (best, _) = optim::minimize(objective, &hyper.to_log(), &[], &cfg.optimizer, Exec::default())?;
        hyper = SurfaceHyper::from_log(&best);
    }
    let solved = kron_solve(&times, &z, &resid, &hyper, cfg.jitter)?;
    Ok(SurfaceGp {
        hyper,
        jitter: solved.jitter,
        grid: *field.grid(),
        times,
        trend,
        alpha: solved.alpha,
        nlml: solved.nlml,
        min_eigenvalue: solved.min_eigenvalue,
        trace: solved.trace,
    })
}

impl SurfaceGp {
    pub fn hyper(&self) -> &SurfaceHyper {
        &self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    /// Smallest eigenvalue of the training covariance (noise and jitter included).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn covariance_trace(&self) -> f64 {
        self.trace
    }

    /// Posterior mean (or its partial derivatives of the given orders) on the
    /// tensor grid `times × z`, as a `[times × z]` matrix. No range checks.
    pub fn eval_grid(&self, times: &[f64], z: &[f64], dt: u8, dz: u8) -> DMatrix<f64> {
        let kt = cross(times, &self.times, self.hyper.lengthscale_t, dt);
        let kz = cross(z, &self.grid.coords(), self.hyper.lengthscale_z, dz);
        let mut out = kt * &self.alpha * kz.transpose() * self.hyper.signal_var;
        for (i, &t) in times.iter().enumerate() {
            for (j, &zz) in z.iter().enumerate() {
                out[(i, j)] += self.trend.value(t, zz, dt, dz);
            }
        }
        out
    }

    pub fn mean(&self, t: f64, z: f64) -> f64 {
        self.eval_grid(&[t], &[z], 0, 0)[(0, 0)]
    }

    fn check_times(&self, times: &[f64]) -> Result<()> {
        let (min, max) = (self.times[0], *self.times.last().unwrap());
        let tol = 1e-9 * (max - min).abs().max(1.0);
        match times.iter().find(|&&t| !(t >= min - tol && t <= max + tol)) {
            Some(&time) => Err(Error::Extrapolation { time, min, max }),
            None => Ok(()),
        }
    }
}

/// `p`, `q` and their time derivatives from the surface mean. The deflection
/// is pinned at both ends, so `p` and `ṗ` vanish there.
pub fn estimate_derivatives(gp: &SurfaceGp, times: &[f64], grid: &SpatialGrid) -> Result<StateTrajectory> {
    gp.check_times(times)?;
    if !grid.same_domain(gp.grid()) {
        return Err(Error::dim("query grid must span the fitted spatial domain"));
    }
    let z = grid.coords();
    let p = gp.eval_grid(times, &z, 1, 0);
    let q = gp.eval_grid(times, &z, 0, 1);
    let pdot = gp.eval_grid(times, &z, 2, 0);
    let qdot = gp.eval_grid(times, &z, 1, 1);
    let n = grid.n_nodes();
    let snap = |a: &DMatrix<f64>, b: &DMatrix<f64>, i: usize, pin: bool| {
        let mut first: DVector<f64> = a.row(i).transpose();
        if pin {
            first[0] = 0.0;
            first[n - 1] = 0.0;
        }
        StateSnapshot {
            p: first,
            q: b.row(i).transpose(),
        }
    };
    let states = (0..times.len()).map(|i| snap(&p, &q, i, true)).collect();
    let derivs = (0..times.len()).map(|i| snap(&pdot, &qdot, i, true)).collect();
    StateTrajectory::new(*grid, times.to_vec(), states, Some(derivs))
}

/// Derivatives on a refined grid of `n_e` nodes over the same domain.
pub fn augment_spatial(gp: &SurfaceGp, times: &[f64], n_e: usize) -> Result<StateTrajectory> {
    if n_e < gp.grid().n_nodes() {
        return Err(Error::config(format!(
            "refined grid needs at least {} nodes, got {n_e}",
            gp.grid().n_nodes()
        )));
    }
    estimate_derivatives(gp, times, &gp.grid().refined(n_e)?)
}

/// Deflection reconstructed from the surface mean on arbitrary times and grid.
pub fn surface_field(gp: &SurfaceGp, times: &[f64], grid: &SpatialGrid) -> Result<SpaceTimeField> {
    gp.check_times(times)?;
    SpaceTimeField::new(*grid, times.to_vec(), gp.eval_grid(times, &grid.coords(), 0, 0))
}
