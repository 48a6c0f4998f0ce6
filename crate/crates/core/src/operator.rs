//! Discrete interconnection/dissipation structure for the fixed-end string in
//! `(p, q)` form, shared by the simulator, the GP kernel and the integrator.
//!
//! Nodal values carry trapezoid quadrature weights `w = (½, 1, …, 1, ½)`, so the
//! discrete energy is `H = dz · ½ Σ wᵢ (pᵢ² + κ qᵢ²)`. The operator acts on the
//! energy-density gradient `g = ∇H / dz = [w∘p; κ w∘q]`, and
//! `A = [[−c·P, E], [−Eᵀ, 0]]` with `E = D W⁻¹`, where `D` is the central
//! difference stencil with zero rows at the two pinned nodes and `P` projects
//! onto interior nodes. The interconnection part is exactly skew.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{SpatialGrid, StateSnapshot};
use crate::error::{Error, Result};

/// Trapezoid weights for the grid's nodes (unscaled by `dz`).
pub fn trapezoid_weights(grid: &SpatialGrid) -> DVector<f64> {
    let n = grid.n_nodes();
    DVector::from_fn(n, |i, _| if i == 0 || i + 1 == n { 0.5 } else { 1.0 })
}

/// Central first-difference stencil, rows at the pinned nodes zeroed.
pub fn central_stencil(grid: &SpatialGrid) -> DMatrix<f64> {
    let n = grid.n_nodes();
    let h = 0.5 / grid.dz();
    let mut d = DMatrix::zeros(n, n);
    for i in 1..n - 1 {
        d[(i, i - 1)] = -h;
        d[(i, i + 1)] = h;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DphsOperator {
    grid: SpatialGrid,
    damping: f64,
    coupling: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl DphsOperator {
    pub fn new(grid: SpatialGrid, damping: f64) -> Result<Self> {
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(Error::config(format!("damping must be finite and >= 0, got {damping}")));
        }
        let n = grid.n_nodes();
        let w = trapezoid_weights(&grid);
        let mut coupling = central_stencil(&grid);
        for j in 0..n {
            coupling.column_mut(j).scale_mut(1.0 / w[j]);
        }
        let mut matrix = DMatrix::zeros(2 * n, 2 * n);
        for i in 1..n - 1 {
            matrix[(i, i)] = -damping;
        }
        for i in 0..n {
            for j in 0..n {
                let e = coupling[(i, j)];
                if e != 0.0 {
                    matrix[(i, n + j)] = e;
                    matrix[(n + j, i)] = -e;
                }
            }
        }
        Ok(DphsOperator {
            grid,
            damping,
            coupling,
            matrix,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Same grid, different damping.
    pub fn with_damping(&self, damping: f64) -> Result<Self> {
        Self::new(self.grid, damping)
    }

    /// The `p`-to-`q` coupling block `E`.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    /// Full `[2n × 2n]` structure matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.matrix * g
    }
}

/// Quadratic string energy with stiffness `κ` (squared wave speed).
#[derive(Debug, Clone, PartialEq)]
pub struct StringEnergy {
    stiffness: f64,
    dz: f64,
    weights: DVector<f64>,
}

impl StringEnergy {
    pub fn new(grid: &SpatialGrid, stiffness: f64) -> Self {
        StringEnergy {
            stiffness,
            dz: grid.dz(),
            weights: trapezoid_weights(grid),
        }
    }

    pub fn energy(&self, x: &StateSnapshot) -> f64 {
        let e: f64 = (0..x.n_nodes())
            .map(|i| self.weights[i] * (x.p[i] * x.p[i] + self.stiffness * x.q[i] * x.q[i]))
            .sum();
        0.5 * self.dz * e
    }

    /// `∇H / dz` in stacked layout.
    pub fn density_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.weights.len();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.weights[i] * x[i]
            } else {
                self.stiffness * self.weights[i - n] * x[i]
            }
        })
    }

    /// The exact vector field `A · ∇H / dz`.
    pub fn field(&self, op: &DphsOperator, x: &DVector<f64>) -> DVector<f64> {
        op.apply(&self.density_gradient(x))
    }
}
