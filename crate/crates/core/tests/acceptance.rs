//! Acceptance suite A1-A8. One line per criterion; nonzero exit on failure.

use std::f64::consts::PI;
use std::time::Instant;

use vkflow_core::aero::AeroParams;
use vkflow_core::diagnostics::{
    convergence_detector, dissipation_increments, energy_rate_residual_integral, fit_decay_rate_after,
    ConvergenceCriteria, DifferenceProbe, Verdict,
};
use vkflow_core::grid::{clamped_mode, norm_l2};
use vkflow_core::stationary::{NewtonOptions, StationaryProblem};
use vkflow_core::verify::{self, log_slope, CheckReport};
use vkflow_core::{run, EquilibriumSet, Integrator, PlateGrid, Probes, ScalarField, SimConfig};

const SEED: u64 = 20240611;

struct Outcome {
    passed: bool,
    summary: String,
}

impl Outcome {
    fn from_checks(checks: &[CheckReport]) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            summary: checks
                .iter()
                .map(|c| format!("{} {:.3e}/{:.1e}", c.name, c.value, c.threshold))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

fn benchmark(grid: &PlateGrid, amp: f64) -> SimConfig {
    let mut c = SimConfig::new(grid, 0.4).unwrap();
    c.aero = AeroParams::new(0.4, 32, 32).unwrap();
    c.k = 1.0;
    c.beta = 0.0;
    c.p0 = ScalarField::from_fn(grid, |x, y| amp * (PI * x).sin() * (PI * y).sin() * (1.0 + x));
    c
}

fn a1() -> Outcome {
    let g = PlateGrid::unit_square(48).unwrap();
    let mut checks = vec![verify::biharmonic_symmetry(&g, 10, SEED), verify::airy_residuals(&g, 10, SEED + 1)];
    checks.extend(verify::bracket_refinement(&[32, 64, 128], SEED + 2));
    Outcome::from_checks(&checks)
}

fn a2() -> Outcome {
    let g = PlateGrid::unit_square(48).unwrap();
    let checks: Vec<_> = [0.0, 0.3, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &u)| verify::horizon_sampling(&g, u, 100_000, SEED + 3 + i as u64))
        .collect();
    Outcome::from_checks(&checks)
}

fn a3() -> Outcome {
    let g = PlateGrid::unit_square(48).unwrap();
    let p = AeroParams::new(0.4, 256, 256).unwrap();
    Outcome::from_checks(&[verify::kernel_oracle(&g, &p, 10, 48, SEED + 6)])
}

fn a4() -> Outcome {
    let mut pts = Vec::new();
    for n in [15, 31, 63] {
        let g = PlateGrid::unit_square(n).unwrap();
        let mut c = benchmark(&g, 50.0);
        c.dt = g.hx() / 4.0;
        c.t_end = 1.0;
        let z = ScalarField::zeros(&g);
        let tr = run(&c, &g, &z, &z, &Probes::every(1)).unwrap();
        pts.push((g.hx(), energy_rate_residual_integral(&tr.records, c.damping())));
    }
    let order = log_slope(&pts);
    Outcome {
        passed: order >= 1.8,
        summary: format!(
            "combined order {order:.3} (>= 1.8); residuals {}",
            pts.iter().map(|p| format!("{:.3e}", p.1)).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn a5() -> Outcome {
    let g = PlateGrid::unit_square(48).unwrap();
    let mut c = benchmark(&g, 200.0);
    c.t_end = 25.0;
    let prob = StationaryProblem::new(&c, &g).unwrap();
    let eq = prob.newton(&ScalarField::zeros(&g), &NewtonOptions::default()).unwrap();
    let mut set = EquilibriumSet::default();
    set.insert_outcome(&eq, &c).unwrap();
    let mut probes = Probes::every(10);
    probes.equilibria = Some(set);
    let z = ScalarField::zeros(&g);
    let tr = run(&c, &g, &z, &z, &probes).unwrap();
    let crit = ConvergenceCriteria {
        window: 2.0,
        velocity_tol: 1e-6,
        distance_tol: 1e-4,
    };
    let verdict = convergence_detector(&tr.records, &crit);
    let last = tr.records.last().unwrap();
    let incr = dissipation_increments(&tr.records, 2.0);
    let tail = incr.last().copied().unwrap_or(f64::INFINITY);
    let converged = matches!(verdict, Verdict::Converged { .. });
    Outcome {
        passed: converged && tail <= 1e-8,
        summary: format!(
            "{verdict:?}; final |u_t|={:.2e} distance={:.2e}; last dissipation increment {tail:.2e} (<= 1e-8)",
            last.u_t_norm,
            last.dist_to_equilibria.unwrap_or(f64::NAN)
        ),
    }
}

/// Returns (rate, r2, fraction of post-burn-in steps with dV <= 0).
fn difference_decay(k: f64, beta: f64, amp: f64) -> (f64, f64, f64) {
    let g = PlateGrid::unit_square(24).unwrap();
    let mut c = SimConfig::new(&g, 0.4).unwrap();
    c.aero = AeroParams::new(0.4, 32, 32).unwrap();
    c.k = k;
    c.beta = beta;
    c.t_end = 9.0;
    let integ = Integrator::new(&c, &g).unwrap();
    let u0 = ScalarField::lincomb(amp, &clamped_mode(&g, 1, 1), 0.35 * amp, &clamped_mode(&g, 2, 1));
    let m12 = clamped_mode(&g, 1, 2);
    let du = m12.scaled(1e-3 * norm_l2(&u0) / norm_l2(&m12));
    let z = ScalarField::zeros(&g);
    let mut s1 = integ.init(&u0, &z).unwrap();
    let mut s2 = integ.init(&(&u0 + &du), &z).unwrap();
    let mut probe = DifferenceProbe::with_defaults(integ.t_star());
    probe.push(&s1, &s2, beta, k).unwrap();
    for _ in 0..c.steps() {
        integ.step(&mut s1).unwrap();
        integ.step(&mut s2).unwrap();
        probe.push(&s1, &s2, beta, k).unwrap();
    }
    let burn = 2.0 * integ.t_star();
    let e: Vec<(f64, f64)> = probe.series.iter().map(|p| (p.0, p.1)).collect();
    let (rate, r2) = fit_decay_rate_after(&e, burn).unwrap();
    let post: Vec<_> = probe.series.iter().filter(|p| p.0 >= burn).collect();
    let dec = post.windows(2).filter(|w| w[1].2 <= w[0].2).count();
    (rate, r2, dec as f64 / (post.len() - 1) as f64)
}

fn a6() -> Outcome {
    let (rate, r2, frac) = difference_decay(20.0, 20.0, 2.0);
    let (rate0, r20, _) = difference_decay(0.0, 0.0, 0.5);
    Outcome {
        passed: rate > 0.0 && r2 >= 0.95 && frac >= 0.99,
        summary: format!(
            "k=beta=20: rate {rate:.3} r2 {r2:.5} dV<=0 on {:.1}% of steps; k=beta=0: rate {rate0:.3} r2 {r20:.5}",
            100.0 * frac
        ),
    }
}

fn a7() -> Outcome {
    Outcome::from_checks(&[verify::trace_refinement(&[32, 64, 128], 0.4)])
}

fn a8() -> Outcome {
    let g = PlateGrid::unit_square(16).unwrap();
    let mut checks = verify::fixed_point_drift(&g, 0.3);
    checks.push(verify::linear_regime(&g, 0.3));
    checks.push(verify::buckling_branches(&g, 0.3));
    Outcome::from_checks(&checks)
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("A1", "operator algebra", a1),
        ("A2", "delay horizon", a2),
        ("A3", "kernel oracle", a3),
        ("A4", "reduced energy identity", a4),
        ("A5", "convergence to equilibria", a5),
        ("A6", "exponential decay of differences", a6),
        ("A7", "trace self-consistency", a7),
        ("A8", "stationary certificates", a8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let t0 = Instant::now();
        let out = f();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!("{id} {tag} {name} [{:.1}s]: {}", t0.elapsed().as_secs_f64(), out.summary);
        failed += usize::from(!out.passed);
    }
    println!("acceptance: {}/8 passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
