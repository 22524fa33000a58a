use std::f64::consts::PI;

use vkflow_core::aero::AeroParams;
use vkflow_core::diagnostics::{convergence_detector, energy_rate_residual_integral, ConvergenceCriteria, Verdict};
use vkflow_core::grid::clamped_mode;
use vkflow_core::stationary::{critical_compression, NewtonOptions};
use vkflow_core::{run, Error, InPlaneLoad, NonlinearityKind, PlateGrid, Probes, ScalarField, SimConfig, StationaryProblem};

fn config(n: usize) -> (PlateGrid, SimConfig) {
    let g = PlateGrid::unit_square(n).unwrap();
    let mut c = SimConfig::new(&g, 0.4).unwrap();
    c.aero = AeroParams::new(0.4, 16, 16).unwrap();
    c.k = 1.0;
    c.t_end = 0.5;
    c.p0 = ScalarField::from_fn(&g, |x, y| 20.0 * (PI * x).sin() * (PI * y).sin());
    (g, c)
}

#[test]
fn zero_length_run_has_one_record() {
    let (g, mut c) = config(10);
    c.t_end = 0.0;
    let z = ScalarField::zeros(&g);
    let tr = run(&c, &g, &z, &z, &Probes::every(1)).unwrap();
    assert_eq!(tr.records.len(), 1);
    assert_eq!(tr.records[0].t, 0.0);
    assert!(tr.aborted.is_none());
}

#[test]
fn runs_are_deterministic() {
    let (g, c) = config(10);
    let u0 = clamped_mode(&g, 1, 1).scaled(0.1);
    let z = ScalarField::zeros(&g);
    let a = run(&c, &g, &u0, &z, &Probes::every(3)).unwrap();
    let b = run(&c, &g, &u0, &z, &Probes::every(3)).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_state.u.values(), b.final_state.u.values());
}

#[test]
fn energy_residual_shrinks_with_step() {
    let (g, mut c) = config(12);
    let z = ScalarField::zeros(&g);
    let dt0 = c.dt;
    let mut res = Vec::new();
    for f in [1.0, 0.5] {
        c.dt = dt0 * f;
        let tr = run(&c, &g, &z, &z, &Probes::every(1)).unwrap();
        res.push(energy_rate_residual_integral(&tr.records, c.damping()));
    }
    assert!(res[1] < 0.5 * res[0], "{res:?}");
}

#[test]
fn both_energy_paths_agree() {
    let (g, c) = config(12);
    let u0 = clamped_mode(&g, 2, 1).scaled(0.3);
    let z = ScalarField::zeros(&g);
    let tr = run(&c, &g, &u0, &z, &Probes::every(5)).unwrap();
    for r in &tr.records {
        assert!((r.e_red - r.e_red_check).abs() <= 1e-3 * (1.0 + r.e_red.abs()), "{r:?}");
    }
}

#[test]
fn short_run_is_not_converged() {
    let (g, c) = config(10);
    let u0 = clamped_mode(&g, 1, 1).scaled(0.5);
    let z = ScalarField::zeros(&g);
    let tr = run(&c, &g, &u0, &z, &Probes::every(1)).unwrap();
    let v = convergence_detector(&tr.records, &ConvergenceCriteria::uniform(0.2, 1e-6));
    assert!(!matches!(v, Verdict::Converged { .. }), "{v:?}");
}

#[test]
fn compression_below_critical_keeps_trivial_state() {
    let g = PlateGrid::unit_square(12).unwrap();
    let (gc, mode) = critical_compression(&g).unwrap();
    assert!(gc > 0.0 && mode.is_finite());
    let mut c = SimConfig::new(&g, 0.0).unwrap();
    c.kind = NonlinearityKind::VonKarman(InPlaneLoad::uniaxial(&g, 0.5 * gc));
    let prob = StationaryProblem::new(&c, &g).unwrap();
    let out = prob.newton(&mode.scaled(3.0), &NewtonOptions::default()).unwrap();
    assert!(out.converged);
    assert!(out.u.max_abs() < 1e-8, "{}", out.u.max_abs());
}

#[test]
fn sonic_speed_rejected() {
    let g = PlateGrid::unit_square(10).unwrap();
    assert!(matches!(SimConfig::new(&g, 1.0), Err(Error::InvalidParameter { .. })));
}
