//! Reduced aerodynamics: delay horizon, delayed potential and local
//! reconstruction of the flow potential from the plate history.

mod flow;
mod history;
mod horizon;
mod kernel;

pub use flow::{reconstruct_phi, reconstruct_phi_t, trace_residual, FlowFields, PlaneFlow};
pub use history::{DelayHistory, Slot};
pub use horizon::t_star;
pub use kernel::{q_potential, DelayKernel, StaticKernel};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Smallest admissible quadrature count in either direction.
pub const MIN_QUADRATURE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeroParams {
    /// Flow speed as a fraction of the speed of sound.
    pub u: f64,
    pub theta_n: usize,
    pub s_n: usize,
}

impl Default for AeroParams {
    fn default() -> Self {
        Self {
            u: 0.0,
            theta_n: 64,
            s_n: 64,
        }
    }
}

impl AeroParams {
    pub fn new(u: f64, theta_n: usize, s_n: usize) -> Result<Self> {
        let p = Self { u, theta_n, s_n };
        p.validate()?;
        Ok(p)
    }

    pub fn with_speed(u: f64) -> Result<Self> {
        Self::new(u, 64, 64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u >= 0.0 && self.u < 1.0) {
            return Err(invalid(
                "U",
                format!("flow speed must lie in [0, 1) (subsonic only), got {}", self.u),
            ));
        }
        if self.theta_n < MIN_QUADRATURE || self.s_n < MIN_QUADRATURE {
            return Err(invalid(
                "quadrature",
                format!(
                    "theta_n and s_n must be at least {MIN_QUADRATURE}, got {} and {}",
                    self.theta_n, self.s_n
                ),
            ));
        }
        Ok(())
    }
}
