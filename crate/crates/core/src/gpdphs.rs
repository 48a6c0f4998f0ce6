//! Gaussian process on the Hamiltonian gradient, observed through the
//! port-Hamiltonian structure matrix.
//!
//! With `g = ∇H` given an SE prior of variance `σ²` and lengthscale `φ`, the
//! time derivative `ẋ = A g(x)` has covariance
//! `A · ∂²k/∂x∂x' · Aᵀ = σ² k (AAᵀ/φ² − (A d)(A d)ᵀ/φ⁴)` with `d = x − x'`.
//! Rows of `A` that vanish (momentum at the pinned ends) carry no information
//! and are left out of the conditioning set.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{RngSeed, SpatialGrid, StateSnapshot, StateTrajectory};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::integrate::{GradientField, VectorField};
use crate::linalg::Cholesky;
use crate::operator::DphsOperator;
use crate::optim::{self, AdamConfig, OptimTrace};

/// Largest `N · 2n` the dense training covariance may reach.
pub const TRAINING_BUDGET: usize = 6_000;
pub const DEFAULT_BASIS: usize = 512;
const MIN_BASIS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_f: f64,
    pub lengthscale: f64,
    pub damping: f64,
    pub noise_var: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    1e-8
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            sigma_f: 1.0,
            lengthscale: 3.0,
            damping: 0.1,
            noise_var: 1e-5,
            jitter: default_jitter(),
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_f", self.sigma_f),
            ("lengthscale", self.lengthscale),
            ("noise_var", self.noise_var),
            ("jitter", self.jitter),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::config(format!("damping must be >= 0, got {}", self.damping)));
        }
        Ok(())
    }

    fn signal_var(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inverse_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Cross-derivative `∂²k/∂x∂x'` of the SE kernel, a `[2n × 2n]` matrix.
pub fn se_hessian_block(x1: &DVector<f64>, x2: &DVector<f64>, sigma_f: f64, lengthscale: f64) -> DMatrix<f64> {
    let d = x1 - x2;
    let l2 = lengthscale * lengthscale;
    let k = sigma_f * sigma_f * (-0.5 * d.norm_squared() / l2).exp();
    let mut h = &d * d.transpose() * (-k / (l2 * l2));
    for i in 0..h.nrows() {
        h[(i, i)] += k / l2;
    }
    h
}

/// Structure matrix restricted to its non-zero rows.
#[derive(Debug, Clone)]
struct Projection {
    active: Vec<usize>,
    rows: DMatrix<f64>,
    /// `A Aᵀ` on the active rows.
    outer: DMatrix<f64>,
}

impl Projection {
    fn new(op: &DphsOperator, all_rows: bool) -> Self {
        let a = op.matrix();
        let active: Vec<usize> = (0..a.nrows())
            .filter(|&i| all_rows || a.row(i).iter().any(|&v| v != 0.0))
            .collect();
        let rows = DMatrix::from_fn(active.len(), a.ncols(), |r, c| a[(active[r], c)]);
        let outer = &rows * rows.transpose();
        Projection { active, rows, outer }
    }

    fn m(&self) -> usize {
        self.active.len()
    }

    /// `A x` on active rows for every state row of `x`, as rows.
    fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.rows.transpose()
    }
}

fn sq_dists(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
        (0..x1.ncols()).map(|c| (x1[(i, c)] - x2[(j, c)]).powi(2)).sum()
    })
}

/// Covariance between the projected derivatives at `x1` and `x2`, block
/// `(i, j)` at rows `i·m..`, columns `j·m..`.
fn cross_covariance(
    sigma_f: f64,
    lengthscale: f64,
    proj: &Projection,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    exec: Exec,
) -> DMatrix<f64> {
    let m = proj.m();
    let (n1, n2) = (x1.nrows(), x2.nrows());
    let a1 = proj.project(x1);
    let a2 = proj.project(x2);
    let d2 = sq_dists(x1, x2);
    let l2 = lengthscale * lengthscale;
    let s2 = sigma_f * sigma_f;
    let rows = m * n1;
    let mut data = vec![0.0; rows * m * n2];
    if rows == 0 || n2 == 0 {
        return DMatrix::zeros(rows, m * n2);
    }
    // One chunk per block column; every entry is computed independently, so
    // the result does not depend on how chunks are scheduled.
    exec.for_each_chunk_mut(&mut data, rows * m, |j, chunk| {
        let mut u = vec![0.0; m];
        for i in 0..n1 {
            let k = s2 * (-0.5 * d2[(i, j)] / l2).exp();
            for a in 0..m {
                u[a] = a1[(i, a)] - a2[(j, a)];
            }
            for b in 0..m {
                let col = &mut chunk[b * rows..(b + 1) * rows];
                for a in 0..m {
                    col[i * m + a] = k * (proj.outer[(a, b)] / l2 - u[a] * u[b] / (l2 * l2));
                }
            }
        }
    });
    DMatrix::from_vec(rows, m * n2, data)
}

/// Full covariance of `ẋ` between state sets (rows are states), shape
/// `[2n·N₁ × 2n·N₂]`.
pub fn kernel_matrix(
    params: &KernelParams,
    op: &DphsOperator,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    exec: Exec,
) -> Result<DMatrix<f64>> {
    check_states(op, x1)?;
    check_states(op, x2)?;
    let proj = Projection::new(op, true);
    Ok(cross_covariance(params.sigma_f, params.lengthscale, &proj, x1, x2, exec))
}

fn check_states(op: &DphsOperator, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != op.dim() {
        return Err(Error::dim(format!(
            "states have {} entries, operator expects {}",
            x.ncols(),
            op.dim()
        )));
    }
    Ok(())
}

/// Targets on the active rows, stacked state by state.
fn targets(proj: &Projection, xdot: &DMatrix<f64>) -> DVector<f64> {
    let m = proj.m();
    DVector::from_fn(xdot.nrows() * m, |r, _| xdot[(r / m, proj.active[r % m])])
}

struct Conditioned {
    chol: Cholesky,
    alpha: DVector<f64>,
    nlml: f64,
}

fn condition_on(
    params: &KernelParams,
    proj: &Projection,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    exec: Exec,
) -> Result<Conditioned> {
    let mut k = cross_covariance(params.sigma_f, params.lengthscale, proj, x, x, exec);
    for i in 0..k.nrows() {
        k[(i, i)] += params.noise_var;
    }
    let chol = Cholesky::factor(&k, params.jitter)?;
    let alpha = chol.solve(y);
    let m = y.len() as f64;
    let nlml = 0.5 * y.dot(&alpha) + 0.5 * chol.log_det() + 0.5 * m * (2.0 * std::f64::consts::PI).ln();
    Ok(Conditioned { chol, alpha, nlml })
}

/// Negative log marginal likelihood of `ẋ` data (rows are states).
pub fn nlml(
    params: &KernelParams,
    op: &DphsOperator,
    x: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    exec: Exec,
) -> Result<f64> {
    params.validate()?;
    check_states(op, x)?;
    if xdot.shape() != x.shape() {
        return Err(Error::dim("states and derivatives differ in shape"));
    }
    let op = op.with_damping(params.damping)?;
    let proj = Projection::new(&op, false);
    condition_on(params, &proj, x, &targets(&proj, xdot), exec).map(|c| c.nlml)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    /// When false the damping stays at its initial value.
    pub learn_damping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamConfig {
                learning_rate: 0.1,
                iterations: 100,
                ..AdamConfig::default()
            },
            learn_damping: true,
        }
    }
}

/// Potential and gradient of a kernel expansion
/// `ĥ(x) = Σⱼ σ² k(x, xⱼ) (dⱼ·γⱼ)/φ²`, `dⱼ = x − xⱼ`.
#[derive(Debug, Clone, PartialEq)]
struct Expansion {
    centers: DMatrix<f64>,
    coeffs: DMatrix<f64>,
    signal_var: f64,
    lengthscale: f64,
}

impl Expansion {
    fn terms(&self, x: &DVector<f64>) -> impl Iterator<Item = (f64, DVector<f64>, f64)> + '_ {
        let l2 = self.lengthscale * self.lengthscale;
        let x = x.clone();
        (0..self.centers.nrows()).map(move |j| {
            let d = &x - self.centers.row(j).transpose();
            let k = self.signal_var * (-0.5 * d.norm_squared() / l2).exp();
            let dg = d.dot(&self.coeffs.row(j).transpose());
            (k, d, dg)
        })
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let l2 = self.lengthscale * self.lengthscale;
        let mut g = DVector::zeros(x.len());
        for (j, (k, d, dg)) in self.terms(x).enumerate() {
            g += self.coeffs.row(j).transpose() * (k / l2) - d * (k * dg / (l2 * l2));
        }
        g
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        let l2 = self.lengthscale * self.lengthscale;
        self.terms(x).map(|(k, _, dg)| k * dg / l2).sum()
    }
}

/// Trained GP-dPHS model; immutable once built.
#[derive(Debug, Clone)]
pub struct GpDphsModel {
    params: KernelParams,
    operator: DphsOperator,
    proj: Projection,
    states: DMatrix<f64>,
    derivs: DMatrix<f64>,
    chol: Cholesky,
    mean: Expansion,
    nlml: f64,
    trace: Option<OptimTrace>,
}

/// Evenly spaced indices keeping at most `keep` of `n`.
fn subsample(n: usize, keep: usize) -> Vec<usize> {
    if keep >= n {
        return (0..n).collect();
    }
    if keep <= 1 {
        return vec![0];
    }
    (0..keep)
        .map(|i| ((i as f64) * (n - 1) as f64 / (keep - 1) as f64).round() as usize)
        .collect()
}

fn training_data(traj: &StateTrajectory) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let derivs = traj
        .deriv_matrix()
        .ok_or_else(|| Error::Data("trajectory has no time derivatives".into()))?;
    if traj.is_empty() {
        return Err(Error::InsufficientData {
            what: "training states",
            needed: 1,
            have: 0,
        });
    }
    let dim = 2 * traj.grid.n_nodes();
    let keep = (TRAINING_BUDGET / dim).max(1);
    let idx = subsample(traj.len(), keep);
    let x = traj.state_matrix();
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), dim, |r, c| m[(idx[r], c)]);
    let (x, xd) = (pick(&x), pick(&derivs));
    if x.iter().chain(xd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("training data contains non-finite values".into()));
    }
    Ok((x, xd))
}

impl GpDphsModel {
    /// Conditions on data with fixed hyperparameters.
    pub fn condition(params: KernelParams, grid: SpatialGrid, traj: &StateTrajectory, exec: Exec) -> Result<Self> {
        let (x, xd) = training_data(traj)?;
        Self::from_parts(params, grid, x, xd, None, exec)
    }

    fn from_parts(
        params: KernelParams,
        grid: SpatialGrid,
        states: DMatrix<f64>,
        derivs: DMatrix<f64>,
        trace: Option<OptimTrace>,
        exec: Exec,
    ) -> Result<Self> {
        params.validate()?;
        let operator = DphsOperator::new(grid, params.damping)?;
        check_states(&operator, &states)?;
        let proj = Projection::new(&operator, false);
        let cond = condition_on(&params, &proj, &states, &targets(&proj, &derivs), exec)?;
        let mean = Expansion {
            coeffs: coefficient_rows(&proj, &cond.alpha, states.nrows(), operator.dim()),
            centers: states.clone(),
            signal_var: params.signal_var(),
            lengthscale: params.lengthscale,
        };
        Ok(GpDphsModel {
            params,
            operator,
            proj,
            states,
            derivs,
            chol: cond.chol,
            mean,
            nlml: cond.nlml,
            trace,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn operator(&self) -> &DphsOperator {
        &self.operator
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.operator.grid()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn derivs(&self) -> &DMatrix<f64> {
        &self.derivs
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    pub fn trace(&self) -> Option<&OptimTrace> {
        self.trace.as_ref()
    }

    /// Training covariance `K + σₙ² I` on the active rows, as factored.
    pub fn training_covariance(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// Posterior mean of the Hamiltonian gradient.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mean.gradient(x)
    }

    /// Posterior mean of the Hamiltonian, up to an additive constant.
    pub fn potential(&self, x: &DVector<f64>) -> f64 {
        self.mean.potential(x)
    }

    /// Posterior mean of `ẋ`.
    pub fn mean_field(&self, x: &DVector<f64>) -> DVector<f64> {
        self.operator.apply(&self.gradient(x))
    }

    /// Posterior mean and covariance of `ẋ` at one state.
    pub fn posterior_field(&self, x: &StateSnapshot) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let flat = x.flatten();
        if flat.len() != self.operator.dim() {
            return Err(Error::dim("query state does not match the model grid"));
        }
        let q = DMatrix::from_row_slice(1, flat.len(), flat.as_slice());
        let cross = cross_covariance(
            self.params.sigma_f,
            self.params.lengthscale,
            &self.proj,
            &self.states,
            &q,
            Exec::Sequential,
        );
        let v = self.chol.solve_lower_mat(&cross);
        let l2 = self.params.lengthscale * self.params.lengthscale;
        let active = &self.proj.outer * (self.params.signal_var() / l2) - v.transpose() * &v;
        let dim = self.operator.dim();
        let mut cov = DMatrix::zeros(dim, dim);
        for (r, &i) in self.proj.active.iter().enumerate() {
            for (c, &j) in self.proj.active.iter().enumerate() {
                cov[(i, j)] = 0.5 * (active[(r, c)] + active[(c, r)]);
            }
        }
        Ok((self.mean_field(&flat), cov))
    }

    /// Pathwise posterior draw: a random-feature prior sample of the
    /// Hamiltonian plus the data-driven correction.
    pub fn sample_field(&self, seed: RngSeed, n_basis: usize) -> Result<SampledField> {
        if n_basis == 0 {
            return Err(Error::config("n_basis must be >= 1"));
        }
        let dim = self.operator.dim();
        let mut rng = seed.rng();
        let omega = DMatrix::from_fn(n_basis, dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z / self.params.lengthscale
        });
        let phase = DVector::from_fn(n_basis, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
        let scale = (2.0 * self.params.signal_var() / n_basis as f64).sqrt();
        let weight = DVector::from_fn(n_basis, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        let prior = FeaturePrior { omega, phase, weight };
        let m = self.proj.m();
        let n_train = self.states.nrows();
        let y = targets(&self.proj, &self.derivs);
        let noise_sd = self.params.noise_var.sqrt();
        let mut resid = DVector::zeros(y.len());
        for j in 0..n_train {
            let xj = self.states.row(j).transpose();
            let fx = &self.proj.rows * prior.gradient(&xj);
            for a in 0..m {
                let eps: f64 = StandardNormal.sample(&mut rng);
                resid[j * m + a] = y[j * m + a] - fx[a] - noise_sd * eps;
            }
        }
        let v = self.chol.solve(&resid);
        let correction = Expansion {
            centers: self.states.clone(),
            coeffs: coefficient_rows(&self.proj, &v, n_train, dim),
            signal_var: self.params.signal_var(),
            lengthscale: self.params.lengthscale,
        };
        Ok(SampledField {
            operator: self.operator.clone(),
            prior,
            correction,
            seed,
            degraded: n_basis < MIN_BASIS,
        })
    }
}

/// `Aᵀ v` per training state, as rows.
fn coefficient_rows(proj: &Projection, v: &DVector<f64>, n: usize, dim: usize) -> DMatrix<f64> {
    let m = proj.m();
    let mut out = DMatrix::zeros(n, dim);
    for j in 0..n {
        let block = v.rows(j * m, m);
        out.set_row(j, &(proj.rows.tr_mul(&block)).transpose());
    }
    out
}

impl VectorField for GpDphsModel {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mean_field(x)
    }
}

impl GradientField for GpDphsModel {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mean.gradient(x)
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.mean.potential(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FeaturePrior {
    omega: DMatrix<f64>,
    phase: DVector<f64>,
    weight: DVector<f64>,
}

impl FeaturePrior {
    fn arguments(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.omega * x + &self.phase
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let s = self.arguments(x).zip_map(&self.weight, |a, w| -w * a.sin());
        self.omega.tr_mul(&s)
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        self.arguments(x).zip_map(&self.weight, |a, w| w * a.cos()).sum()
    }
}

/// One deterministic draw of the learned dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    operator: DphsOperator,
    prior: FeaturePrior,
    correction: Expansion,
    seed: RngSeed,
    /// Too few random features for a faithful prior approximation.
    pub degraded: bool,
}

impl SampledField {
    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.prior.gradient(x) + self.correction.gradient(x)
    }

    pub fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        self.operator.apply(&self.gradient(x))
    }
}

impl VectorField for SampledField {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.field(x)
    }
}

impl GradientField for SampledField {
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        SampledField::gradient(self, x)
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.prior.potential(x) + self.correction.potential(x))
    }
}

/// Optimizes `(log σ, log φ, log σₙ², softplus⁻¹ c)` by Adam on the NLML and
/// conditions on the best iterate.
pub fn train(
    traj: &StateTrajectory,
    init: KernelParams,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<GpDphsModel> {
    init.validate()?;
    if cfg.learn_damping && init.damping <= 0.0 {
        return Err(Error::config("initial damping must be positive when it is learned"));
    }
    let grid = traj.grid;
    let (x, xd) = training_data(traj)?;
    let base = DphsOperator::new(grid, init.damping)?;
    let unpack = |v: &[f64]| KernelParams {
        sigma_f: v[0].exp(),
        lengthscale: v[1].exp(),
        noise_var: v[2].exp(),
        damping: if cfg.learn_damping { softplus(v[3]) } else { init.damping },
        jitter: init.jitter,
    };
    let objective = |v: &[f64]| {
        let p = unpack(v);
        nlml(&p, &base, &x, &xd, exec)
    };
    let start = [
        init.sigma_f.ln(),
        init.lengthscale.ln(),
        init.noise_var.ln(),
        if cfg.learn_damping { inverse_softplus(init.damping) } else { 0.0 },
    ];
    let frozen = [false, false, false, !cfg.learn_damping];
    // Gradient probes already run sequentially inside each NLML evaluation's
    // kernel assembly, so the probes themselves run one at a time.
    let (best, trace) = optim::minimize(objective, &start, &frozen, &cfg.optimizer, Exec::Sequential)?;
    GpDphsModel::from_parts(unpack(&best), grid, x, xd, Some(trace), exec)
}

/// `∫ g · dx` along the straight segment from `a` to `b` (3-point Gauss–Legendre).
pub fn line_integral(g: &impl GradientField, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = b - a;
    let r = (0.6f64).sqrt();
    let nodes = [(0.5 * (1.0 - r), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 * (1.0 + r), 5.0 / 18.0)];
    nodes
        .iter()
        .map(|&(s, w)| w * g.gradient(&(a + &d * s)).dot(&d))
        .sum()
}

/// Hamiltonian along a trajectory by line integration of the gradient field
/// between consecutive states, anchored at zero on the first state.
pub fn hamiltonian_estimate(g: &impl GradientField, traj: &StateTrajectory) -> Vec<f64> {
    let xs: Vec<DVector<f64>> = traj.states.iter().map(StateSnapshot::flatten).collect();
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            acc += line_integral(g, &xs[k - 1], x);
        }
        out.push(acc);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    params: KernelParams,
    grid: SpatialGrid,
    n_states: usize,
    /// Row-major `[N × 2n]`.
    states: Vec<f64>,
    derivs: Vec<f64>,
    trace: Option<OptimTrace>,
}

impl GpDphsModel {
    pub fn to_json(&self) -> Result<String> {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Ok(serde_json::to_string_pretty(&StoredModel {
            params: self.params,
            grid: *self.grid(),
            n_states: self.states.nrows(),
            states: row_major(&self.states),
            derivs: row_major(&self.derivs),
            trace: self.trace.clone(),
        })?)
    }

    /// Rebuilds a model saved by [`GpDphsModel::to_json`], refactoring the covariance.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: StoredModel = serde_json::from_str(text)?;
        let dim = 2 * s.grid.n_nodes();
        if s.states.len() != s.n_states * dim || s.derivs.len() != s.n_states * dim {
            return Err(Error::dim("stored training data does not match the grid"));
        }
        let x = DMatrix::from_row_slice(s.n_states, dim, &s.states);
        let xd = DMatrix::from_row_slice(s.n_states, dim, &s.derivs);
        Self::from_parts(s.params, s.grid, x, xd, s.trace, Exec::default())
    }
}
