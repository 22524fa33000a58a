//! Von Karman bracket, Airy stress solve and the nonlinear restoring forces.
//!
//! Sign convention: the restoring force `f(u)` is the term on the left of the
//! plate equation, `u_tt + A u + ... + f(u) = p`, and is the gradient of the
//! nonlinear part of the potential energy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{biharmonic_clamped, inner_unchecked, laplacian, norm_l2, second_derivatives, PlateGrid, ScalarField};
use crate::linalg::{BandedCholesky, BandedSym};

/// Relative residual accepted from every Airy solve.
pub const AIRY_RTOL: f64 = 1e-10;
/// Beyond this relative residual an Airy solve is reported as failed.
const AIRY_HARD_LIMIT: f64 = 1e-6;

/// Shared factorization of the clamped biharmonic matrix on one grid.
#[derive(Clone, Debug)]
pub struct ClampedSolver {
    grid: PlateGrid,
    chol: Arc<BandedCholesky>,
}

impl ClampedSolver {
    pub fn new(grid: &PlateGrid) -> Result<Self> {
        let a = BandedSym::clamped_biharmonic(grid, 1.0, 0.0);
        Ok(Self {
            grid: *grid,
            chol: Arc::new(BandedCholesky::factor(&a)?),
        })
    }

    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }

    /// Solves `A v = b` with iterative refinement; returns `v` and the
    /// relative residual `||A v - b|| / ||b||`.
    pub fn solve(&self, b: &ScalarField) -> Result<(ScalarField, f64)> {
        self.grid.check_same(b.grid())?;
        let bn = norm_l2(b);
        if bn == 0.0 {
            return Ok((ScalarField::zeros(&self.grid), 0.0));
        }
        let mut v = ScalarField::from_values(&self.grid, self.chol.solve(b.values()))?;
        let mut rel = f64::INFINITY;
        for _ in 0..3 {
            let r = b - &biharmonic_clamped(&v);
            let new_rel = norm_l2(&r) / bn;
            if new_rel >= rel {
                break;
            }
            rel = new_rel;
            if rel <= AIRY_RTOL {
                break;
            }
            let dv = self.chol.solve(r.values());
            for (a, d) in v.values_mut().iter_mut().zip(dv) {
                *a += d;
            }
        }
        let r = b - &biharmonic_clamped(&v);
        rel = rel.min(norm_l2(&r) / bn);
        if !(rel <= AIRY_HARD_LIMIT) {
            return Err(Error::SolverDivergence {
                iterations: 3,
                residual: rel,
            });
        }
        Ok((v, rel))
    }
}

/// In-plane load `F0` with its exact second derivatives at the nodes.
///
/// Stored analytically rather than differenced on the clamped lattice, since
/// `F0` need not vanish on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct InPlaneLoad {
    pub values: ScalarField,
    pub fxx: ScalarField,
    pub fxy: ScalarField,
    pub fyy: ScalarField,
}

impl InPlaneLoad {
    pub fn zero(grid: &PlateGrid) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            values: z.clone(),
            fxx: z.clone(),
            fxy: z.clone(),
            fyy: z,
        }
    }

    /// Samples `F0` and differences it with off-plate samples, so no clamped
    /// ring corrupts the derivatives.
    pub fn from_fn(grid: &PlateGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (grid.hx(), grid.hy());
        Self {
            values: ScalarField::from_fn(grid, &f),
            fxx: ScalarField::from_fn(grid, |x, y| (f(x + hx, y) - 2.0 * f(x, y) + f(x - hx, y)) / (hx * hx)),
            fyy: ScalarField::from_fn(grid, |x, y| (f(x, y + hy) - 2.0 * f(x, y) + f(x, y - hy)) / (hy * hy)),
            fxy: ScalarField::from_fn(grid, |x, y| {
                (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4.0 * hx * hy)
            }),
        }
    }

    /// Uniaxial compression along `x` of intensity `gamma`:
    /// `F0 = -gamma y^2 / 2`, so that `-[u, F0] = gamma u_xx`.
    pub fn uniaxial(grid: &PlateGrid, gamma: f64) -> Self {
        let y0 = grid.y0() + 0.5 * grid.ly();
        let z = ScalarField::zeros(grid);
        Self {
            values: ScalarField::from_fn(grid, |_, y| -0.5 * gamma * (y - y0).powi(2)),
            fxx: z.clone(),
            fxy: z,
            fyy: ScalarField::constant(grid, -gamma),
        }
    }

    pub fn is_zero(&self) -> bool {
        [&self.fxx, &self.fxy, &self.fyy].iter().all(|f| f.max_abs() == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearityKind {
    VonKarman(InPlaneLoad),
    Berger { upsilon: f64, kappa: f64 },
}

impl NonlinearityKind {
    /// No nonlinearity at all (Berger with both coefficients zero).
    pub fn linear() -> Self {
        NonlinearityKind::Berger {
            upsilon: 0.0,
            kappa: 0.0,
        }
    }

    pub fn von_karman_unloaded(grid: &PlateGrid) -> Self {
        NonlinearityKind::VonKarman(InPlaneLoad::zero(grid))
    }

    pub fn validate(&self, grid: &PlateGrid) -> Result<()> {
        match self {
            NonlinearityKind::VonKarman(f0) => grid.check_same(f0.values.grid()),
            NonlinearityKind::Berger { upsilon, kappa } => {
                if !(*kappa >= 0.0) || !kappa.is_finite() {
                    return Err(crate::error::invalid("kappa", format!("must be >= 0, got {kappa}")));
                }
                if !upsilon.is_finite() {
                    return Err(crate::error::invalid("upsilon", "must be finite"));
                }
                Ok(())
            }
        }
    }
}

fn bracket_parts(
    (axx, axy, ayy): (&ScalarField, &ScalarField, &ScalarField),
    (bxx, bxy, byy): (&ScalarField, &ScalarField, &ScalarField),
) -> ScalarField {
    let g = *axx.grid();
    let vals = (0..g.len())
        .map(|k| {
            axx.values()[k] * byy.values()[k] + ayy.values()[k] * bxx.values()[k]
                - 2.0 * axy.values()[k] * bxy.values()[k]
        })
        .collect();
    ScalarField::from_values(&g, vals).expect("same grid")
}

/// `[u, w] = u_xx w_yy + u_yy w_xx - 2 u_xy w_xy`
pub fn bracket(u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    u.grid().check_same(w.grid())?;
    let (uxx, uxy, uyy) = second_derivatives(u);
    let (wxx, wxy, wyy) = second_derivatives(w);
    Ok(bracket_parts((&uxx, &uxy, &uyy), (&wxx, &wxy, &wyy)))
}

/// `[u, F0]` with the analytic in-plane load derivatives.
pub fn bracket_load(u: &ScalarField, f0: &InPlaneLoad) -> Result<ScalarField> {
    u.grid().check_same(f0.values.grid())?;
    let (uxx, uxy, uyy) = second_derivatives(u);
    Ok(bracket_parts((&uxx, &uxy, &uyy), (&f0.fxx, &f0.fxy, &f0.fyy)))
}

/// Airy stress `v(u, w)`: `A v = -[u, w]` with clamped conditions.
pub fn airy(solver: &ClampedSolver, u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    Ok(airy_with_residual(solver, u, w)?.0)
}

pub fn airy_with_residual(solver: &ClampedSolver, u: &ScalarField, w: &ScalarField) -> Result<(ScalarField, f64)> {
    let b = bracket(u, w)?;
    solver.solve(&-&b)
}

/// Discrete `||grad u||^2`, taken as `-<Lap u, u>` so that the Berger force
/// is an exact gradient.
pub fn grad_norm_sq(u: &ScalarField) -> f64 {
    -inner_unchecked(&laplacian(u), u)
}

pub fn restoring_force(solver: &ClampedSolver, u: &ScalarField, kind: &NonlinearityKind) -> Result<ScalarField> {
    solver.grid().check_same(u.grid())?;
    match kind {
        NonlinearityKind::VonKarman(f0) => {
            let v = airy(solver, u, u)?;
            let (uxx, uxy, uyy) = second_derivatives(u);
            let (vxx, vxy, vyy) = second_derivatives(&v);
            let (sxx, sxy, syy) = (&vxx + &f0.fxx, &vxy + &f0.fxy, &vyy + &f0.fyy);
            Ok(-&bracket_parts((&uxx, &uxy, &uyy), (&sxx, &sxy, &syy)))
        }
        NonlinearityKind::Berger { upsilon, kappa } => {
            let lap = laplacian(u);
            let g = -inner_unchecked(&lap, u);
            Ok(lap.scaled(upsilon - kappa * g))
        }
    }
}

/// Frozen linearization of `f` at a state, reusable across many directions.
#[derive(Clone, Debug)]
pub struct Linearization {
    solver: ClampedSolver,
    inner: LinInner,
}

#[derive(Clone, Debug)]
enum LinInner {
    VonKarman {
        u2: (ScalarField, ScalarField, ScalarField),
        s2: (ScalarField, ScalarField, ScalarField),
    },
    Berger {
        coef: f64,
        two_kappa: f64,
        lap_u: ScalarField,
    },
}

impl Linearization {
    pub fn new(solver: &ClampedSolver, u: &ScalarField, kind: &NonlinearityKind) -> Result<Self> {
        solver.grid().check_same(u.grid())?;
        let inner = match kind {
            NonlinearityKind::VonKarman(f0) => {
                let v = airy(solver, u, u)?;
                let (vxx, vxy, vyy) = second_derivatives(&v);
                LinInner::VonKarman {
                    u2: second_derivatives(u),
                    s2: (&vxx + &f0.fxx, &vxy + &f0.fxy, &vyy + &f0.fyy),
                }
            }
            NonlinearityKind::Berger { upsilon, kappa } => {
                let lap_u = laplacian(u);
                let g = -inner_unchecked(&lap_u, u);
                LinInner::Berger {
                    coef: upsilon - kappa * g,
                    two_kappa: 2.0 * kappa,
                    lap_u,
                }
            }
        };
        Ok(Self {
            solver: solver.clone(),
            inner,
        })
    }

    /// Directional derivative `f'(u) h`.
    pub fn apply(&self, h: &ScalarField) -> Result<ScalarField> {
        self.solver.grid().check_same(h.grid())?;
        match &self.inner {
            LinInner::VonKarman { u2, s2 } => {
                let h2 = second_derivatives(h);
                let hr = (&h2.0, &h2.1, &h2.2);
                // v(u, h) solves A v = -[u, h]
                let uh = bracket_parts((&u2.0, &u2.1, &u2.2), hr);
                let (vuh, _) = self.solver.solve(&-&uh)?;
                let v2 = second_derivatives(&vuh);
                let mut out = bracket_parts(hr, (&s2.0, &s2.1, &s2.2));
                out.axpy(2.0, &bracket_parts((&u2.0, &u2.1, &u2.2), (&v2.0, &v2.1, &v2.2)));
                out.scale(-1.0);
                Ok(out)
            }
            LinInner::Berger { coef, two_kappa, lap_u } => {
                let mut out = laplacian(h).scaled(*coef);
                if *two_kappa != 0.0 {
                    out.axpy(two_kappa * inner_unchecked(lap_u, h), lap_u);
                }
                Ok(out)
            }
        }
    }
}

pub fn restoring_jacobian_apply(
    solver: &ClampedSolver,
    u: &ScalarField,
    h: &ScalarField,
    kind: &NonlinearityKind,
) -> Result<ScalarField> {
    Linearization::new(solver, u, kind)?.apply(h)
}

/// Nonlinear part of the potential energy, without the load term.
pub fn nonlinear_potential(solver: &ClampedSolver, u: &ScalarField, kind: &NonlinearityKind) -> Result<f64> {
    match kind {
        NonlinearityKind::VonKarman(f0) => {
            let v = airy(solver, u, u)?;
            let stress = 0.25 * inner_unchecked(&biharmonic_clamped(&v), &v);
            let load = if f0.is_zero() {
                0.0
            } else {
                -0.5 * inner_unchecked(&bracket_load(u, f0)?, u)
            };
            Ok(stress + load)
        }
        NonlinearityKind::Berger { upsilon, kappa } => {
            let g = grad_norm_sq(u);
            Ok(-0.5 * upsilon * g + 0.25 * kappa * g * g)
        }
    }
}

/// `Pi(u) = Pi_nl(u) - <p, u>`; its gradient is `f(u) - p`.
pub fn potential_pi(solver: &ClampedSolver, u: &ScalarField, kind: &NonlinearityKind, p: &ScalarField) -> Result<f64> {
    u.grid().check_same(p.grid())?;
    Ok(nonlinear_potential(solver, u, kind)? - inner_unchecked(p, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_l2;
    use std::f64::consts::PI;

    fn smooth(g: &PlateGrid, a: f64, b: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| {
            let s = (PI * x).sin() * (PI * y).sin();
            s * s * (1.0 + a * x + b * y * y)
        })
    }

    #[test]
    fn bracket_of_quadratics() {
        let g = PlateGrid::unit_square(16).unwrap();
        let u = ScalarField::from_fn(&g, |x, _| 0.5 * x * x);
        let w = ScalarField::from_fn(&g, |_, y| 0.5 * y * y);
        let b = bracket(&u, &w).unwrap();
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                assert!((b.get(i, j) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bracket_symmetric_exactly() {
        let g = PlateGrid::unit_square(12).unwrap();
        let (u, w) = (smooth(&g, 1.0, -0.5), smooth(&g, -2.0, 0.7));
        assert_eq!(bracket(&u, &w).unwrap(), bracket(&w, &u).unwrap());
    }

    #[test]
    fn airy_residual_and_bilinearity() {
        let g = PlateGrid::unit_square(20).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let u = smooth(&g, 0.5, 0.2);
        let (w1, w2) = (smooth(&g, -1.0, 0.3), smooth(&g, 2.0, -1.0));
        let (v, rel) = airy_with_residual(&s, &u, &u).unwrap();
        assert!(rel <= AIRY_RTOL, "{rel}");
        assert!(v.is_finite());
        let lhs = airy(&s, &u, &(&w1 + &w2)).unwrap();
        let rhs = &airy(&s, &u, &w1).unwrap() + &airy(&s, &u, &w2).unwrap();
        assert!(norm_l2(&(&lhs - &rhs)) <= 1e-9 * norm_l2(&lhs));
        let swapped = airy(&s, &w1, &u).unwrap();
        let direct = airy(&s, &u, &w1).unwrap();
        assert!(norm_l2(&(&swapped - &direct)) <= 1e-12 * norm_l2(&direct));
    }

    #[test]
    fn von_karman_cubic() {
        let g = PlateGrid::unit_square(14).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let kind = NonlinearityKind::von_karman_unloaded(&g);
        let u = smooth(&g, 1.0, 1.0);
        let f1 = restoring_force(&s, &u, &kind).unwrap();
        let f2 = restoring_force(&s, &u.scaled(1.7), &kind).unwrap();
        let diff = &f2 - &f1.scaled(1.7f64.powi(3));
        assert!(norm_l2(&diff) <= 1e-9 * norm_l2(&f2));
    }

    #[test]
    fn berger_kappa_zero_is_scaled_laplacian() {
        let g = PlateGrid::unit_square(10).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let u = smooth(&g, 0.1, 0.0);
        let f = restoring_force(&s, &u, &NonlinearityKind::Berger { upsilon: 3.0, kappa: 0.0 }).unwrap();
        assert_eq!(f, laplacian(&u).scaled(3.0));
    }

    #[test]
    fn jacobian_vanishes_at_origin() {
        let g = PlateGrid::unit_square(10).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let kind = NonlinearityKind::von_karman_unloaded(&g);
        let j = restoring_jacobian_apply(&s, &ScalarField::zeros(&g), &smooth(&g, 0.0, 1.0), &kind).unwrap();
        assert_eq!(j.max_abs(), 0.0);
    }

    fn fd_check(kind: &NonlinearityKind, g: &PlateGrid) {
        let s = ClampedSolver::new(g).unwrap();
        let u = smooth(g, 0.3, -0.4).scaled(0.8);
        let h = smooth(g, -0.9, 0.5);
        let jac = restoring_jacobian_apply(&s, &u, &h, kind).unwrap();
        let eps = 1e-5;
        let fp = restoring_force(&s, &(&u + &h.scaled(eps)), kind).unwrap();
        let fm = restoring_force(&s, &(&u - &h.scaled(eps)), kind).unwrap();
        let fd = (&fp - &fm).scaled(0.5 / eps);
        let rel = norm_l2(&(&fd - &jac)) / norm_l2(&jac);
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = PlateGrid::unit_square(12).unwrap();
        fd_check(&NonlinearityKind::VonKarman(InPlaneLoad::uniaxial(&g, 5.0)), &g);
        fd_check(&NonlinearityKind::Berger { upsilon: 2.0, kappa: 3.0 }, &g);
    }

    #[test]
    fn berger_potential_gradient_exact() {
        let g = PlateGrid::unit_square(12).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let kind = NonlinearityKind::Berger { upsilon: 1.5, kappa: 2.0 };
        let p = ScalarField::constant(&g, 0.3);
        let u = smooth(&g, 0.2, 0.1);
        let h = smooth(&g, 1.0, -1.0);
        let eps = 1e-6;
        let d = (potential_pi(&s, &(&u + &h.scaled(eps)), &kind, &p).unwrap()
            - potential_pi(&s, &(&u - &h.scaled(eps)), &kind, &p).unwrap())
            / (2.0 * eps);
        let f = restoring_force(&s, &u, &kind).unwrap();
        let expect = inner_unchecked(&(&f - &p), &h);
        assert!((d - expect).abs() <= 1e-7 * expect.abs().max(1.0), "{d} vs {expect}");
    }

    #[test]
    fn unloaded_potential_nonnegative() {
        let g = PlateGrid::unit_square(10).unwrap();
        let s = ClampedSolver::new(&g).unwrap();
        let kind = NonlinearityKind::von_karman_unloaded(&g);
        let pi = potential_pi(&s, &smooth(&g, 0.0, 0.0), &kind, &ScalarField::zeros(&g)).unwrap();
        assert!(pi >= 0.0);
        assert_eq!(potential_pi(&s, &ScalarField::zeros(&g), &kind, &ScalarField::zeros(&g)).unwrap(), 0.0);
    }
}
