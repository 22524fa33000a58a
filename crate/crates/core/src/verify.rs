//! Self-checks against independent oracles: operator algebra, the delay
//! horizon, the kernel quadrature, trace consistency of the reconstructed
//! flow, and certificates of computed equilibria.
//!
//! Every check returns a [`CheckReport`]; none of them panics on failure.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aero::{t_star, trace_residual, AeroParams, DelayHistory, DelayKernel};
use crate::dynamics::{HistoryInit, Integrator, SimConfig};
use crate::error::Result;
use crate::grid::{
    biharmonic_clamped, clamped_mode, eval_extended, inner_unchecked, norm_l2, second_derivatives, PlateGrid, ScalarField,
};
use crate::stationary::{certificate_tol, critical_compression, EquilibriumSet, NewtonOptions, StationaryProblem};
use crate::vonkarman::{airy_with_residual, bracket, ClampedSolver, InPlaneLoad, NonlinearityKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
            detail,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
            detail,
        }
    }

    fn failed(name: &str, threshold: f64, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            threshold,
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.3e} (threshold {:.1e}) {}", self.name, self.value, self.threshold, self.detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(1 - r^2/R^2)^6` inside the disc, zero outside; smooth enough for
/// second-order consistency of every difference operator used here.
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub amp: f64,
}

impl Bump {
    pub fn random(r: &mut impl Rng, grid: &PlateGrid) -> Self {
        let radius = r.gen_range(0.2..0.35) * grid.lx().min(grid.ly());
        let cx = grid.x0() + r.gen_range(radius..grid.lx() - radius);
        let cy = grid.y0() + r.gen_range(radius..grid.ly() - radius);
        Self {
            cx,
            cy,
            radius,
            amp: r.gen_range(-1.0..1.0),
        }
    }

    fn rho(&self, x: f64, y: f64) -> f64 {
        ((x - self.cx).powi(2) + (y - self.cy).powi(2)) / (self.radius * self.radius)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let r = self.rho(x, y);
        if r >= 1.0 {
            0.0
        } else {
            self.amp * (1.0 - r).powi(6)
        }
    }

    /// `(u_xx, u_xy, u_yy)`
    pub fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let r = self.rho(x, y);
        if r >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let r2 = self.radius * self.radius;
        let d1 = -6.0 * (1.0 - r).powi(5) * self.amp;
        let d2 = 30.0 * (1.0 - r).powi(4) * self.amp;
        let (rx, ry) = (2.0 * (x - self.cx) / r2, 2.0 * (y - self.cy) / r2);
        let rxx = 2.0 / r2;
        (d2 * rx * rx + d1 * rxx, d2 * rx * ry, d2 * ry * ry + d1 * rxx)
    }

    pub fn sample(&self, grid: &PlateGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.value(x, y))
    }
}

fn random_field(r: &mut impl Rng, grid: &PlateGrid) -> ScalarField {
    let values = (0..grid.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    ScalarField::from_values(grid, values).expect("grid length")
}

/// Relative symmetry defect of the clamped biharmonic on random fields.
pub fn biharmonic_symmetry(grid: &PlateGrid, trials: usize, seed: u64) -> CheckReport {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut min_ray = f64::INFINITY;
    for _ in 0..trials {
        let f = random_field(&mut r, grid);
        let g = random_field(&mut r, grid);
        let (af, ag) = (biharmonic_clamped(&f), biharmonic_clamped(&g));
        let d = (inner_unchecked(&af, &g) - inner_unchecked(&f, &ag)).abs() / (norm_l2(&af) * norm_l2(&g));
        worst = worst.max(d);
        min_ray = min_ray.min(inner_unchecked(&af, &f));
    }
    let mut rep = CheckReport::at_most(
        "biharmonic symmetry",
        worst,
        1e-12,
        format!("{}x{} grid, {trials} pairs, min <Af,f> = {min_ray:.3e}", grid.nx(), grid.ny()),
    );
    if !(min_ray > 0.0) {
        rep.passed = false;
    }
    rep
}

/// Worst relative residual of Airy solves for random smooth data.
pub fn airy_residuals(grid: &PlateGrid, trials: usize, seed: u64) -> CheckReport {
    let name = "airy residual";
    let solver = match ClampedSolver::new(grid) {
        Ok(s) => s,
        Err(e) => return CheckReport::failed(name, 1e-10, e),
    };
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = Bump::random(&mut r, grid).sample(grid);
        let w = Bump::random(&mut r, grid).sample(grid);
        match airy_with_residual(&solver, &u, &w) {
            Ok((_, res)) => worst = worst.max(res),
            Err(e) => return CheckReport::failed(name, 1e-10, e),
        }
    }
    CheckReport::at_most(name, worst, 1e-10, format!("{}x{} grid, {trials} solves", grid.nx(), grid.ny()))
}

/// Least-squares slope of `log err` against `log h`.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (xm, ym) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    sxy / sxx
}

/// Refinement of the bracket on compactly supported bumps: the defect of the
/// trilinear symmetry `<[u,v],w> = <[u,w],v>` and the L2 distance to the
/// exact bracket must both fall at second order.
pub fn bracket_refinement(sizes: &[usize], seed: u64) -> Vec<CheckReport> {
    let mut r = rng(seed);
    let g0 = PlateGrid::unit_square(MIN_SIZE).expect("valid grid");
    let (bu, bv, bw) = (Bump::random(&mut r, &g0), Bump::random(&mut r, &g0), Bump::random(&mut r, &g0));
    let mut sym = Vec::new();
    let mut cons = Vec::new();
    for &n in sizes {
        let g = match PlateGrid::unit_square(n) {
            Ok(g) => g,
            Err(e) => return vec![CheckReport::failed("bracket refinement", 1.9, e)],
        };
        let (u, v, w) = (bu.sample(&g), bv.sample(&g), bw.sample(&g));
        let uv = bracket(&u, &v).expect("same grid");
        let uw = bracket(&u, &w).expect("same grid");
        let scale = norm_l2(&uv) * norm_l2(&w) + norm_l2(&uw) * norm_l2(&v);
        sym.push((g.hx(), (inner_unchecked(&uv, &w) - inner_unchecked(&uw, &v)).abs() / scale));
        let exact = ScalarField::from_fn(&g, |x, y| {
            let (a, b, c) = bu.hessian(x, y);
            let (d, e, f) = bv.hessian(x, y);
            a * f + c * d - 2.0 * b * e
        });
        cons.push((g.hx(), norm_l2(&(&uv - &exact)) / norm_l2(&exact)));
    }
    let fmt = |pts: &[(f64, f64)]| {
        pts.iter()
            .map(|(h, e)| format!("h={h:.4} err={e:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    vec![
        CheckReport::at_least("bracket symmetry slope", log_slope(&sym), 1.9, fmt(&sym)),
        CheckReport::at_least("bracket consistency slope", log_slope(&cons), 1.9, fmt(&cons)),
    ]
}

const MIN_SIZE: usize = 32;

/// Whether the footprint `(x - (U + sin th) s, y - s cos th)` is on the
/// closed plate.
fn footprint_inside(grid: &PlateGrid, u: f64, x: f64, y: f64, th: f64, s: f64) -> bool {
    let px = x - (u + th.sin()) * s;
    let py = y - th.cos() * s;
    let eps = 1e-15;
    px >= grid.x0() - eps && px <= grid.x0() + grid.lx() + eps && py >= grid.y0() - eps && py <= grid.y0() + grid.ly() + eps
}

/// Exit time of one footprint by bisection on the inside predicate.
fn exit_time(grid: &PlateGrid, u: f64, x: f64, y: f64, th: f64, s_max: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if footprint_inside(grid, u, x, y, th, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Brute-force check of the delay horizon: no sampled footprint stays on the
/// plate past `t*`, and a hill climb on the exit time comes within `1e-3 t*`
/// of it.
pub fn horizon_sampling(grid: &PlateGrid, u: f64, samples: usize, seed: u64) -> CheckReport {
    let name = "delay horizon";
    let ts = match t_star(grid, u) {
        Ok(t) => t,
        Err(e) => return CheckReport::failed(name, 1e-3, e),
    };
    let s_max = 2.0 * grid.diameter() / (1.0 - u);
    let mut r = rng(seed);
    let mut counter = 0usize;
    let mut inside = Vec::new();
    for _ in 0..samples {
        let x = grid.x0() + r.gen::<f64>() * grid.lx();
        let y = grid.y0() + r.gen::<f64>() * grid.ly();
        let th = r.gen::<f64>() * 2.0 * PI;
        let s = r.gen::<f64>() * s_max;
        if footprint_inside(grid, u, x, y, th, s) {
            if s > ts * (1.0 + 1e-12) {
                counter += 1;
            }
            inside.push((s, x, y, th));
        }
    }
    inside.sort_by(|a, b| b.0.total_cmp(&a.0));
    let best_sample = inside.first().map_or(0.0, |b| b.0);
    // hill climbs on the exit time from the best samples
    let mut e: f64 = 0.0;
    for &(_, x0, y0, th0) in inside.iter().take(16) {
        let (mut x, mut y, mut th) = (x0, y0, th0);
        let mut cur = exit_time(grid, u, x, y, th, s_max);
        let mut step = 0.25;
        while step > 1e-9 {
            let mut improved = false;
            for _ in 0..64 {
                let cx = (x + step * grid.lx() * r.gen_range(-1.0..1.0)).clamp(grid.x0(), grid.x0() + grid.lx());
                let cy = (y + step * grid.ly() * r.gen_range(-1.0..1.0)).clamp(grid.y0(), grid.y0() + grid.ly());
                let ct = th + step * PI * r.gen_range(-1.0..1.0);
                let ce = exit_time(grid, u, cx, cy, ct, s_max);
                if ce > cur {
                    (x, y, th, cur) = (cx, cy, ct, ce);
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        e = e.max(cur);
    }
    if e > ts * (1.0 + 1e-9) {
        counter += 1;
    }
    let slack = (ts - e) / ts;
    let mut rep = CheckReport::at_most(
        name,
        slack.max(0.0),
        1e-3,
        format!(
            "U={u}: t*={ts:.6}, sampled sup={e:.6}, sampled max={:.6}, diam/(1-U)={:.6}, counterexamples={counter}",
            best_sample,
            grid.diameter() / (1.0 - u)
        ),
    );
    rep.name = format!("delay horizon U={u}");
    if counter > 0 {
        rep.passed = false;
    }
    rep
}

/// `q` of a time-independent state at one point by pointwise trapezoid
/// quadrature with `theta_n x s_n` nodes, bilinear sampling of the second
/// derivatives and the `s = 0` end correction with a finite-difference slope.
fn dense_static_q_at(fields: &[ScalarField; 3], u: f64, ts: f64, theta_n: usize, s_n: usize, x: f64, y: f64) -> f64 {
    let angles: Vec<(f64, f64)> = (0..theta_n).map(|i| (2.0 * PI * i as f64 / theta_n as f64).sin_cos()).collect();
    let ring = |s: f64| {
        let mut acc = 0.0;
        for &(sa, ca) in &angles {
            let (px, py) = (x - (u + sa) * s, y - ca * s);
            acc += sa * sa * eval_extended(&fields[0], px, py)
                + 2.0 * sa * ca * eval_extended(&fields[1], px, py)
                + ca * ca * eval_extended(&fields[2], px, py);
        }
        acc / theta_n as f64
    };
    let hs = ts / s_n as f64;
    let mut acc = 0.0;
    for j in 0..=s_n {
        let ws = if j == 0 || j == s_n { 0.5 * hs } else { hs };
        acc += ws * ring(j as f64 * hs);
    }
    let eps = 1e-6 * fields[0].grid().hx();
    acc + hs * hs / 12.0 * (ring(eps) - ring(0.0)) / eps
}

/// [`dense_static_q_at`] at the given node indices.
pub fn dense_static_q(u: &ScalarField, params: &AeroParams, refine: usize, nodes: &[usize]) -> Result<Vec<f64>> {
    let g = *u.grid();
    let ts = t_star(&g, params.u)?;
    let (uxx, uxy, uyy) = second_derivatives(u);
    let fields = [uxx, uxy, uyy];
    let (tn, sn) = (params.theta_n * refine, params.s_n * refine);
    Ok(nodes
        .par_iter()
        .map(|&k| {
            let (x, y) = g.node(k % g.nx(), k / g.nx());
            dense_static_q_at(&fields, params.u, ts, tn, sn, x, y)
        })
        .collect())
}

/// Production kernel on frozen random histories against [`dense_static_q`]
/// with four times the nodes in both directions, compared on `sample_nodes`
/// random nodes per history. Histories are sums of plate-scale shapes
/// `(sin pi x sin pi y)^4 P(x, y)` with random quadratic `P`.
pub fn kernel_oracle(grid: &PlateGrid, params: &AeroParams, histories: usize, sample_nodes: usize, seed: u64) -> CheckReport {
    let name = "delayed potential quadrature";
    let run = || -> Result<f64> {
        let kernel = DelayKernel::new(grid, params)?;
        let mut r = rng(seed);
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..histories {
            let c: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
            let (x0, y0, lx, ly) = (grid.x0(), grid.y0(), grid.lx(), grid.ly());
            let u = ScalarField::from_fn(grid, |x, y| {
                let (a, b) = ((x - x0) / lx, (y - y0) / ly);
                ((PI * a).sin() * (PI * b).sin()).powi(4) * (c[0] + c[1] * a + c[2] * b + c[3] * a * b + c[4] * a * a + c[5] * b * b)
            });
            let dt = kernel.t_star() / r.gen_range(20.0..40.0);
            let hist = DelayHistory::frozen(grid, dt, kernel.t_star(), r.gen_range(0.0..5.0), &u)?;
            let q = kernel.apply(&hist)?;
            let nodes: Vec<usize> = (0..sample_nodes).map(|_| r.gen_range(0..grid.len())).collect();
            let dense = dense_static_q(&u, params, 4, &nodes)?;
            for (&k, d) in nodes.iter().zip(&dense) {
                num += (q.values()[k] - d).powi(2);
                den += d * d;
            }
        }
        Ok((num / den).sqrt())
    };
    match run() {
        Ok(w) => CheckReport::at_most(
            name,
            w,
            1e-4,
            format!(
                "{}x{} grid, U={}, {}x{} nodes vs 4x dense at {sample_nodes} points, {histories} histories",
                grid.nx(),
                grid.ny(),
                params.u,
                params.theta_n,
                params.s_n
            ),
        ),
        Err(e) => CheckReport::failed(name, 1e-4, e),
    }
}

/// Trace residual of the reconstructed flow on a smooth synthetic history
/// under simultaneous refinement of grid, time step and quadrature.
pub fn trace_refinement(nodes: &[usize], u: f64) -> CheckReport {
    let name = "trace residual slope";
    let run = || -> Result<Vec<(f64, f64)>> {
        let mut pts = Vec::new();
        for &n in nodes {
            let g = PlateGrid::unit_square(n - 1)?;
            let p = AeroParams::new(u, n, n)?;
            let ts = t_star(&g, u)?;
            let shape = ScalarField::from_fn(&g, |x, y| ((PI * x).sin() * (PI * y).sin()).powi(4));
            let hist = DelayHistory::from_fn(&g, ts / n as f64, ts, 3.0, |t| {
                (shape.scaled((1.3 * t).sin()), shape.scaled(1.3 * (1.3 * t).cos()))
            })?;
            pts.push((1.0 / n as f64, trace_residual(&hist, &p, &g, 3.0)?));
        }
        Ok(pts)
    };
    match run() {
        Ok(pts) => {
            let detail = pts
                .iter()
                .map(|(h, e)| format!("N={:.0} res={e:.3e}", 1.0 / h))
                .collect::<Vec<_>>()
                .join(", ");
            CheckReport::at_least(name, log_slope(&pts), 1.0, detail)
        }
        Err(e) => CheckReport::failed(name, 1.0, e),
    }
}

/// Newton equilibrium of a loaded, flow-coupled plate and its drift under
/// 100 steps of the dynamics started from it with a frozen history.
pub fn fixed_point_drift(grid: &PlateGrid, u: f64) -> Vec<CheckReport> {
    let run = || -> Result<(f64, f64, f64, f64)> {
        let mut c = loaded_config(grid, u, 100.0)?;
        c.history_init = HistoryInit::Frozen;
        let prob = StationaryProblem::new(&c, grid)?;
        let out = prob.newton(&ScalarField::zeros(grid), &NewtonOptions::default())?;
        let integ = Integrator::new(&c, grid)?;
        let mut s = integ.init(&out.u, &ScalarField::zeros(grid))?;
        let mut drift: f64 = 0.0;
        for _ in 0..100 {
            integ.step(&mut s)?;
            drift = drift.max(norm_l2(&(&s.u - &out.u)));
        }
        Ok((out.residual_norm, certificate_tol(&c.p0), drift, norm_l2(&out.u)))
    };
    match run() {
        Ok((res, tol, drift, size)) => vec![
            CheckReport::at_most("newton certificate", res, tol, format!("|u|={size:.3e}")),
            CheckReport::at_most("fixed-point drift", drift, 1e-8, "100 steps, frozen history".into()),
        ],
        Err(e) => vec![
            CheckReport::failed("newton certificate", 0.0, &e),
            CheckReport::failed("fixed-point drift", 1e-8, &e),
        ],
    }
}

fn loaded_config(grid: &PlateGrid, u: f64, amp: f64) -> Result<SimConfig> {
    let mut c = SimConfig::new(grid, u)?;
    c.aero = AeroParams::new(u, 32, 32)?;
    c.k = 1.0;
    c.p0 = ScalarField::from_fn(grid, |x, y| {
        let (a, b) = ((x - grid.x0()) / grid.lx(), (y - grid.y0()) / grid.ly());
        amp * (PI * a).sin() * (PI * b).sin() * (1.0 + a)
    });
    Ok(c)
}

/// Newton on a weak load against the one-shot solve of the linearised
/// problem; the cubic terms are below the comparison tolerance.
pub fn linear_regime(grid: &PlateGrid, u: f64) -> CheckReport {
    let name = "linear regime";
    let run = || -> Result<f64> {
        let c = loaded_config(grid, u, 1e-2)?;
        let prob = StationaryProblem::new(&c, grid)?;
        let out = prob.newton(&ScalarField::zeros(grid), &NewtonOptions::default())?;
        let lin = prob.linear_solve()?;
        Ok(norm_l2(&(&out.u - &lin)) / norm_l2(&lin))
    };
    match run() {
        Ok(rel) => CheckReport::at_most(name, rel, 1e-6, "relative L2, |p0| ~ 1e-2".into()),
        Err(e) => CheckReport::failed(name, 1e-6, e),
    }
}

/// Newton from mode guesses on the flow-coupled plate under uniaxial
/// compression `1.3 gamma_c`; every cataloged member must be certified and
/// at least two distinct members nonzero.
pub fn buckling_branches(grid: &PlateGrid, u: f64) -> CheckReport {
    let name = "buckled equilibria";
    let run = || -> Result<(usize, f64, f64)> {
        let (gc, _) = critical_compression(grid)?;
        let gamma = 1.3 * gc;
        let mut c = SimConfig::new(grid, u)?;
        c.aero = AeroParams::new(u, 32, 32)?;
        c.kind = NonlinearityKind::VonKarman(InPlaneLoad::uniaxial(grid, gamma));
        let prob = StationaryProblem::new(&c, grid)?;
        let mut set = EquilibriumSet::default();
        for (m, n) in [(1, 1), (2, 1)] {
            for a in [3.0, -3.0] {
                let out = prob.newton(&clamped_mode(grid, m, n).scaled(a), &NewtonOptions::default())?;
                if out.converged {
                    set.insert_outcome(&out, &c)?;
                }
            }
        }
        let nonzero = set.members().iter().filter(|m| norm_l2(&m.u) > 1e-6).count();
        let worst = set.members().iter().map(|m| m.residual_norm).fold(0.0, f64::max);
        Ok((nonzero, worst, gamma))
    };
    match run() {
        Ok((n, worst, gamma)) => CheckReport::at_least(
            name,
            n as f64,
            2.0,
            format!("gamma={gamma:.3} (1.3 gamma_c), worst residual {worst:.2e}"),
        ),
        Err(e) => CheckReport::failed(name, 2.0, e),
    }
}

/// Size of the oracle suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effort {
    /// Small grids and sample counts; seconds.
    Quick,
    /// The sizes of the acceptance suite.
    Full,
}

/// All oracle suites.
pub fn run_all(effort: Effort, seed: u64) -> Vec<CheckReport> {
    let full = effort == Effort::Full;
    let g = PlateGrid::unit_square(if full { 48 } else { 24 }).expect("valid grid");
    let mut out = vec![
        biharmonic_symmetry(&g, 10, seed),
        airy_residuals(&g, 10, seed + 1),
    ];
    out.extend(bracket_refinement(&[32, 64, 128], seed + 2));
    let samples = if full { 100_000 } else { 20_000 };
    for (i, u) in [0.0, 0.3, 0.7].into_iter().enumerate() {
        out.push(horizon_sampling(&g, u, samples, seed + 3 + i as u64));
    }
    let (hist, pts) = if full { (10, 48) } else { (2, 8) };
    let kg = PlateGrid::unit_square(if full { 48 } else { 32 }).expect("valid grid");
    let kp = AeroParams::new(0.4, 256, 256).expect("valid params");
    out.push(kernel_oracle(&kg, &kp, hist, pts, seed + 6));
    let nodes: &[usize] = if full { &[32, 64, 128] } else { &[32, 64] };
    out.push(trace_refinement(nodes, 0.4));
    let sg = PlateGrid::unit_square(16).expect("valid grid");
    out.extend(fixed_point_drift(&sg, 0.3));
    out.push(linear_regime(&sg, 0.3));
    out.push(buckling_branches(&sg, 0.3));
    out
}
