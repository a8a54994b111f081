//! Robust adaptive beamforming by steering-vector estimation.
//!
//! The desired signal's steering vector is estimated as the minimiser of the
//! Capon output power `a^H R̂⁻¹ a` over `‖a‖² = M` with a cap on the energy the
//! array collects from outside an angular sector. That problem is non-convex
//! but its semidefinite relaxation is tight; [`svest`] solves it through a
//! one-dimensional dual and recovers a certified rank-one solution.

pub mod array_model;
pub mod beamform;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod oracle;
pub mod sector;
pub mod sim;
pub mod svest;

pub use array_model::{steering, ArrayGeometry, SteeringVector};
pub use beamform::{BeamWeights, Method, MethodParams};
pub use error::{Error, Result};
pub use eval::{run_monte_carlo, SinrCurve};
pub use sector::{AngularSector, SectorModel};
pub use sim::{MismatchModel, Scenario};
pub use svest::{estimate, SolverOptions, SvEstimate};
