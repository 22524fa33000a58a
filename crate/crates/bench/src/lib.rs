//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use vkflow_core::aero::AeroParams;
use vkflow_core::grid::clamped_mode;
use vkflow_core::{DelayHistory, PlateGrid, ScalarField, SimConfig};

pub fn grid(n: usize) -> PlateGrid {
    PlateGrid::unit_square(n).expect("valid grid")
}

/// Smooth displacement with several modes.
pub fn shape(g: &PlateGrid) -> ScalarField {
    let mut u = clamped_mode(g, 1, 1);
    u.axpy(0.4, &clamped_mode(g, 2, 1));
    u.axpy(-0.2, &clamped_mode(g, 1, 3));
    u
}

/// Full history of a slowly oscillating shape.
pub fn history(g: &PlateGrid, params: &AeroParams, dt: f64) -> DelayHistory {
    let u = shape(g);
    let ts = vkflow_core::aero::t_star(g, params.u).expect("subsonic");
    DelayHistory::from_fn(g, dt, ts, 2.0, |t| (u.scaled((1.7 * t).cos()), u.scaled(-1.7 * (1.7 * t).sin())))
        .expect("valid history")
}

/// Damped, loaded benchmark configuration.
pub fn config(g: &PlateGrid, quadrature: usize) -> SimConfig {
    let mut c = SimConfig::new(g, 0.4).expect("valid speed");
    c.aero = AeroParams::new(0.4, quadrature, quadrature).expect("valid quadrature");
    c.k = 1.0;
    c.p0 = ScalarField::from_fn(g, |x, y| 200.0 * (PI * x).sin() * (PI * y).sin() * (1.0 + x));
    c
}
