//! Plug-and-play physics-informed forecasting for a vibrating string.
//!
//! A nominal autoregressive predictor is guarded by a split-conformal
//! out-of-distribution gate. When the gate trips, a Gaussian process placed on
//! the gradient of an unknown Hamiltonian (pushed through the port-Hamiltonian
//! structure matrix) is trained from the observed field and rolled forward with
//! a method-of-lines integrator.

pub mod baseline;
pub mod conformal;
pub mod domain;
pub mod error;
pub mod exec;
pub mod gpdphs;
pub mod integrate;
pub mod io;
pub mod linalg;
pub mod nominal;
pub mod operator;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod simulate;

pub use domain::{stack_state, RngSeed, SpaceTimeField, SpatialGrid, StateSnapshot, StateTrajectory};
pub use error::{Error, Result};
pub use exec::Exec;
