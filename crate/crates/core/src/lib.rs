//! Clamped von Karman plate in subsonic potential flow, reduced to a delayed
//! plate equation.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod vonkarman;
pub mod aero;
pub mod dynamics;
pub mod stationary;
pub mod diagnostics;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{PlateGrid, ScalarField};
pub use aero::{AeroParams, DelayHistory, DelayKernel};
pub use vonkarman::{ClampedSolver, InPlaneLoad, NonlinearityKind};
pub use dynamics::{run, Integrator, SimConfig, SimState, Trajectory};
pub use stationary::{EquilibriumSet, StationaryProblem};
pub use diagnostics::{DiagnosticsRecord, Probes};
