//! Grid geometry, observation fields and the stacked `(p, q)` state layout
//! shared by every other module.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{self, SmootherConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Deflection pinned to zero at both ends.
    #[default]
    FixedEnds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct SpatialGrid {
    n_nodes: usize,
    z_min: f64,
    z_max: f64,
    #[serde(default)]
    boundary: Boundary,
}

#[derive(Deserialize)]
struct RawGrid {
    n_nodes: usize,
    z_min: f64,
    z_max: f64,
    #[serde(default)]
    #[allow(dead_code)]
    boundary: Boundary,
}

impl TryFrom<RawGrid> for SpatialGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        SpatialGrid::new(raw.n_nodes, raw.z_min, raw.z_max)
    }
}

impl SpatialGrid {
    pub fn new(n_nodes: usize, z_min: f64, z_max: f64) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::config(format!("grid needs at least 3 nodes, got {n_nodes}")));
        }
        if !(z_min.is_finite() && z_max.is_finite() && z_max > z_min) {
            return Err(Error::config(format!("invalid grid extent [{z_min}, {z_max}]")));
        }
        Ok(SpatialGrid {
            n_nodes,
            z_min,
            z_max,
            boundary: Boundary::FixedEnds,
        })
    }

    /// Grid on the unit interval.
    pub fn unit(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, 0.0, 1.0)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn length(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn dz(&self) -> f64 {
        self.length() / (self.n_nodes - 1) as f64
    }

    /// Coordinate of node `i`; the last node is exactly `z_max`.
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_nodes {
            self.z_max
        } else {
            self.z_min + i as f64 * self.dz()
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|i| self.node(i)).collect()
    }

    /// Same domain with a different node count.
    pub fn refined(&self, n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, self.z_min, self.z_max)
    }

    pub fn same_domain(&self, other: &SpatialGrid) -> bool {
        self.z_min == other.z_min && self.z_max == other.z_max
    }
}

/// Scalar deflection samples on a regular space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: SpatialGrid,
    times: Vec<f64>,
    /// `[n_times × n_nodes]`
    values: DMatrix<f64>,
}

impl SpaceTimeField {
    pub fn new(grid: SpatialGrid, times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != times.len() || values.ncols() != grid.n_nodes() {
            return Err(Error::dim(format!(
                "field values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                times.len(),
                grid.n_nodes()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("times must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("field contains non-finite values".into()));
        }
        Ok(SpaceTimeField { grid, times, values })
    }

    pub fn from_fn(grid: SpatialGrid, times: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let z = grid.coords();
        let values = DMatrix::from_fn(times.len(), grid.n_nodes(), |i, j| f(times[i], z[j]));
        Self::new(grid, times, values)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn frame(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Frames `start..end` as a new field.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_times() {
            return Err(Error::dim(format!(
                "frame range {start}..{end} out of 0..{}",
                self.n_times()
            )));
        }
        Self::new(
            self.grid,
            self.times[start..end].to_vec(),
            self.values.rows(start, end - start).into_owned(),
        )
    }

    /// Linearly interpolates every frame onto `grid` (same spatial domain).
    pub fn resample(&self, grid: &SpatialGrid) -> Result<Self> {
        if !self.grid.same_domain(grid) {
            return Err(Error::dim("cannot resample between different spatial domains"));
        }
        if grid == &self.grid {
            return Ok(self.clone());
        }
        let src = &self.grid;
        let dz = src.dz();
        let weights: Vec<(usize, f64)> = grid
            .coords()
            .iter()
            .map(|&z| {
                let x = ((z - src.z_min()) / dz).clamp(0.0, (src.n_nodes() - 1) as f64);
                let j = (x.floor() as usize).min(src.n_nodes() - 2);
                (j, x - j as f64)
            })
            .collect();
        let values = DMatrix::from_fn(self.n_times(), grid.n_nodes(), |i, k| {
            let (j, w) = weights[k];
            (1.0 - w) * self.values[(i, j)] + w * self.values[(i, j + 1)]
        });
        Self::new(*grid, self.times.clone(), values)
    }

    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.grid, self.times.clone(), values)
    }
}

/// One instant of the stacked state: `p = ∂s/∂t` and `q = ∂s/∂z` at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
}

impl StateSnapshot {
    pub fn zeros(n: usize) -> Self {
        StateSnapshot {
            p: DVector::zeros(n),
            q: DVector::zeros(n),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.p.len()
    }

    /// Canonical layout `[p; q]`.
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.n_nodes();
        DVector::from_fn(2 * n, |i, _| if i < n { self.p[i] } else { self.q[i - n] })
    }

    pub fn from_flat(x: &DVector<f64>) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::dim(format!("stacked state has odd length {}", x.len())));
        }
        let n = x.len() / 2;
        Ok(StateSnapshot {
            p: x.rows(0, n).into_owned(),
            q: x.rows(n, n).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|v| v.is_finite())
    }
}

/// Builds a snapshot from its two channels.
pub fn stack_state(p: &[f64], q: &[f64]) -> Result<StateSnapshot> {
    if p.len() != q.len() {
        return Err(Error::dim(format!("p has {} entries, q has {}", p.len(), q.len())));
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::Data("state entries must be finite".into()));
    }
    Ok(StateSnapshot {
        p: DVector::from_column_slice(p),
        q: DVector::from_column_slice(q),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub states: Vec<StateSnapshot>,
    /// `∂x̃/∂t` at each time, when known.
    pub derivs: Option<Vec<StateSnapshot>>,
}

impl StateTrajectory {
    pub fn new(
        grid: SpatialGrid,
        times: Vec<f64>,
        states: Vec<StateSnapshot>,
        derivs: Option<Vec<StateSnapshot>>,
    ) -> Result<Self> {
        if states.len() != times.len() {
            return Err(Error::dim(format!("{} states for {} times", states.len(), times.len())));
        }
        if let Some(d) = &derivs {
            if d.len() != states.len() {
                return Err(Error::dim(format!("{} derivatives for {} states", d.len(), states.len())));
            }
        }
        if states.iter().chain(derivs.iter().flatten()).any(|s| s.n_nodes() != grid.n_nodes()) {
            return Err(Error::dim("snapshot length differs from grid"));
        }
        Ok(StateTrajectory {
            grid,
            times,
            states,
            derivs,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// States as rows of an `[N × 2n]` matrix.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        stack_rows(&self.states)
    }

    pub fn deriv_matrix(&self) -> Option<DMatrix<f64>> {
        self.derivs.as_deref().map(stack_rows)
    }

    /// Keeps the entries at `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::dim(format!("index {bad} out of {}", self.len())));
        }
        Self::new(
            self.grid,
            indices.iter().map(|&i| self.times[i]).collect(),
            indices.iter().map(|&i| self.states[i].clone()).collect(),
            self.derivs
                .as_ref()
                .map(|d| indices.iter().map(|&i| d[i].clone()).collect()),
        )
    }
}

fn stack_rows(snaps: &[StateSnapshot]) -> DMatrix<f64> {
    let dim = snaps.first().map_or(0, |s| 2 * s.n_nodes());
    let mut m = DMatrix::zeros(snaps.len(), dim);
    for (i, s) in snaps.iter().enumerate() {
        m.set_row(i, &s.flatten().transpose());
    }
    m
}

/// Fits the smoothing surface GP to `field` and differentiates it at the
/// field's own times and nodes.
pub fn field_to_trajectory(field: &SpaceTimeField, cfg: &SmootherConfig) -> Result<StateTrajectory> {
    if field.n_times() < 4 {
        return Err(Error::InsufficientData {
            what: "time frames",
            needed: 4,
            have: field.n_times(),
        });
    }
    let gp = preprocess::fit_surface_gp(field, cfg)?;
    preprocess::estimate_derivatives(&gp, field.times(), field.grid())
}

/// Seed for every stochastic routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for sub-stream `stream` (splitmix64 mixing).
    pub fn fork(self, stream: u64) -> RngSeed {
        let mut z = self.0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}
