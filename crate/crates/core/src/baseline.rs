//! Physics-agnostic comparison model: independent SE-kernel GPs regressing
//! each component of `ẋ` on the full state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::StateTrajectory;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::integrate::VectorField;
use crate::linalg::Cholesky;
use crate::optim::{self, AdamConfig, OptimTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanillaParams {
    pub sigma_f: f64,
    pub lengthscale: f64,
    pub noise_var: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    1e-8
}

impl Default for VanillaParams {
    fn default() -> Self {
        VanillaParams {
            sigma_f: 1.0,
            lengthscale: 3.0,
            noise_var: 1e-5,
            jitter: default_jitter(),
        }
    }
}

impl VanillaParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_f", self.sigma_f),
            ("lengthscale", self.lengthscale),
            ("noise_var", self.noise_var),
            ("jitter", self.jitter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn gram(p: &VanillaParams, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> DMatrix<f64> {
    let l2 = p.lengthscale * p.lengthscale;
    let s2 = p.sigma_f * p.sigma_f;
    DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
        let d2: f64 = (0..x1.ncols()).map(|c| (x1[(i, c)] - x2[(j, c)]).powi(2)).sum();
        s2 * (-0.5 * d2 / l2).exp()
    })
}

#[derive(Debug, Clone)]
pub struct VanillaGp {
    params: VanillaParams,
    states: DMatrix<f64>,
    /// `K⁻¹ Ẋ`, one column per output.
    alpha: DMatrix<f64>,
    chol: Cholesky,
    nlml: f64,
    trace: Option<OptimTrace>,
}

struct Fit {
    chol: Cholesky,
    alpha: DMatrix<f64>,
    nlml: f64,
}

fn fit(p: &VanillaParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Fit> {
    let mut k = gram(p, x, x);
    for i in 0..k.nrows() {
        k[(i, i)] += p.noise_var;
    }
    let chol = Cholesky::factor(&k, p.jitter)?;
    let alpha = chol.solve_mat(y);
    let (n, d) = (y.nrows() as f64, y.ncols() as f64);
    let fit_term = y.component_mul(&alpha).sum();
    let nlml = 0.5 * fit_term + 0.5 * d * chol.log_det() + 0.5 * n * d * (2.0 * std::f64::consts::PI).ln();
    Ok(Fit { chol, alpha, nlml })
}

fn data(traj: &StateTrajectory) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let y = traj
        .deriv_matrix()
        .ok_or_else(|| Error::Data("trajectory has no time derivatives".into()))?;
    if traj.is_empty() {
        return Err(Error::InsufficientData {
            what: "training states",
            needed: 1,
            have: 0,
        });
    }
    Ok((traj.state_matrix(), y))
}

impl VanillaGp {
    pub fn condition(params: VanillaParams, traj: &StateTrajectory) -> Result<Self> {
        params.validate()?;
        let (x, y) = data(traj)?;
        let f = fit(&params, &x, &y)?;
        Ok(VanillaGp {
            params,
            states: x,
            alpha: f.alpha,
            chol: f.chol,
            nlml: f.nlml,
            trace: None,
        })
    }

    pub fn params(&self) -> &VanillaParams {
        &self.params
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    pub fn trace(&self) -> Option<&OptimTrace> {
        self.trace.as_ref()
    }

    /// Training covariance including noise and jitter.
    pub fn training_covariance(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    pub fn mean(&self, x: &DVector<f64>) -> DVector<f64> {
        let q = DMatrix::from_row_slice(1, x.len(), x.as_slice());
        (gram(&self.params, &q, &self.states) * &self.alpha).row(0).transpose()
    }
}

impl VectorField for VanillaGp {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mean(x)
    }
}

/// Fits the baseline, choosing `(σ, φ, σₙ²)` by Adam on the marginal likelihood.
pub fn vanilla_gp_baseline(traj: &StateTrajectory, init: VanillaParams, optimizer: &AdamConfig) -> Result<VanillaGp> {
    init.validate()?;
    let (x, y) = data(traj)?;
    let unpack = |v: &[f64]| VanillaParams {
        sigma_f: v[0].exp(),
        lengthscale: v[1].exp(),
        noise_var: v[2].exp(),
        jitter: init.jitter,
    };
    let objective = |v: &[f64]| fit(&unpack(v), &x, &y).map(|f| f.nlml);
    let start = [init.sigma_f.ln(), init.lengthscale.ln(), init.noise_var.ln()];
    let (best, trace) = optim::minimize(objective, &start, &[], optimizer, Exec::Sequential)?;
    let mut model = VanillaGp::condition(unpack(&best), traj)?;
    model.trace = Some(trace);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{RngSeed, SpatialGrid, StateSnapshot};
    use crate::linalg::min_eigenvalue;
    use rand::Rng;

    fn toy() -> StateTrajectory {
        let grid = SpatialGrid::unit(3).unwrap();
        let mut rng = RngSeed(1).rng();
        let states: Vec<StateSnapshot> = (0..6)
            .map(|_| StateSnapshot::from_flat(&DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0))).unwrap())
            .collect();
        let derivs = states
            .iter()
            .map(|s| StateSnapshot::from_flat(&s.flatten().map(|v| (2.0 * v).sin())).unwrap())
            .collect();
        StateTrajectory::new(grid, (0..6).map(f64::from).collect(), states, Some(derivs)).unwrap()
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let traj = toy();
        let params = VanillaParams {
            noise_var: 1e-10,
            jitter: 1e-12,
            lengthscale: 1.0,
            ..Default::default()
        };
        let gp = VanillaGp::condition(params, &traj).unwrap();
        for (s, d) in traj.states.iter().zip(traj.derivs.as_ref().unwrap()) {
            assert!((gp.mean(&s.flatten()) - d.flatten()).amax() < 1e-4);
        }
    }

    #[test]
    fn covariance_is_psd() {
        let gp = VanillaGp::condition(VanillaParams::default(), &toy()).unwrap();
        let k = gp.training_covariance();
        assert!(min_eigenvalue(&k) >= -1e-8 * k.trace() / k.nrows() as f64);
    }

    #[test]
    fn training_improves_likelihood() {
        let opt = AdamConfig {
            iterations: 30,
            ..Default::default()
        };
        let gp = vanilla_gp_baseline(&toy(), VanillaParams::default(), &opt).unwrap();
        assert!(gp.nlml() <= gp.trace().unwrap().initial());
    }
}
