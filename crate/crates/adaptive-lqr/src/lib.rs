//! Certainty-equivalent adaptive LQR: projected-gradient parameter
//! estimation composed with per-step Riccati synthesis, a planar
//! quadrotor benchmark, and runtime certificates for the closed loop.

pub mod controller;
pub mod dare;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod plant;
pub mod sim;

pub use controller::{apply_policy, ce_lqr_gain, ce_lqr_solution, estimate_gain_lipschitz, PolicyCache};
pub use dare::{riccati_jacobians, solve_dare, RiccatiJacobians, RiccatiSolution};
pub use error::{Error, Result};
pub use estimator::EstimatorState;
pub use model::{AffineParametrization, ParamBox};
pub use sim::{run, run_batch, PlantKind, PolicyMode, SimConfig, StepRecord, TrajectoryLog};
