//! Equilibria of the delayed plate equation.
//!
//! A time-independent state turns the delayed potential into a fixed linear
//! operator `Q_stat`, so equilibria solve
//!
//! ```text
//! A u + beta u + f(u) + U u_x + Q_stat u = p0
//! ```

use serde::{Deserialize, Serialize};

use crate::aero::StaticKernel;
use crate::dynamics::{FlowCoupling, SimConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::{biharmonic_clamped, dx, inner_unchecked, laplacian, norm_l2, second_derivatives, PlateGrid, ScalarField};
use crate::linalg::{gmres, BandedCholesky, BandedSym, GmresOptions, SolveStats};
use crate::vonkarman::{restoring_force, ClampedSolver, InPlaneLoad, Linearization, NonlinearityKind};

/// Residual certificate required of every cataloged equilibrium.
pub fn certificate_tol(p0: &ScalarField) -> f64 {
    1e-9 * (1.0 + norm_l2(p0))
}

/// Tightest relative residual asked of GMRES; restarted GMRES stagnates a
/// little above this on the larger grids.
const GMRES_FLOOR: f64 = 1e-12;

/// Treats a stagnated solve as usable when its residual is below `accept`.
fn accept_stagnation(stats: Result<SolveStats>, accept: f64) -> Result<SolveStats> {
    match stats {
        Err(Error::SolverDivergence { iterations, residual }) if residual <= accept => Ok(SolveStats {
            iterations,
            relative_residual: residual,
        }),
        other => other,
    }
}

/// Cached operators of the stationary problem for one configuration.
#[derive(Clone, Debug)]
pub struct StationaryProblem {
    grid: PlateGrid,
    config: SimConfig,
    airy: ClampedSolver,
    q_stat: Option<StaticKernel>,
    precond: BandedCholesky,
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Overrides the default certificate `1e-9 (1 + ||p0||)` when set.
    pub tol: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            max_backtracks: 30,
            tol: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    /// Best iterate (the solution when `converged`).
    pub u: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
    pub failure: Option<String>,
}

impl StationaryProblem {
    pub fn new(config: &SimConfig, grid: &PlateGrid) -> Result<Self> {
        config.validate(grid)?;
        let q_stat = match config.coupling {
            FlowCoupling::Full => Some(StaticKernel::new(grid, &config.aero)?),
            FlowCoupling::Off => None,
        };
        let m = BandedSym::clamped_biharmonic(grid, 1.0, config.beta);
        Ok(Self {
            grid: *grid,
            config: config.clone(),
            airy: ClampedSolver::new(grid)?,
            q_stat,
            precond: BandedCholesky::factor(&m)?,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }

    /// `A u + beta u + U u_x + Q_stat u`
    pub fn linear_part(&self, u: &ScalarField) -> Result<ScalarField> {
        let mut r = biharmonic_clamped(u);
        if self.config.beta != 0.0 {
            r.axpy(self.config.beta, u);
        }
        if let Some(q) = &self.q_stat {
            if self.config.aero.u != 0.0 {
                r.axpy(self.config.aero.u, &dx(u));
            }
            r.axpy(1.0, &q.apply(u)?);
        }
        Ok(r)
    }

    pub fn residual(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(u.grid())?;
        let mut r = self.linear_part(u)?;
        r.axpy(1.0, &restoring_force(&self.airy, u, &self.config.kind)?);
        r.axpy(-1.0, &self.config.p0);
        Ok(r)
    }

    /// Solves `J h = b` with the Jacobian frozen at `u`.
    fn jacobian_solve(&self, lin: &Linearization, b: &ScalarField, rtol: f64, accept: f64) -> Result<(ScalarField, SolveStats)> {
        let g = self.grid;
        let failed = std::cell::RefCell::new(None);
        let apply = |v: &[f64], out: &mut [f64]| {
            let h = ScalarField::from_values(&g, v.to_vec()).expect("grid length");
            let r = self.linear_part(&h).and_then(|mut r| {
                r.axpy(1.0, &lin.apply(&h)?);
                Ok(r)
            });
            match r {
                Ok(r) => out.copy_from_slice(r.values()),
                Err(e) => {
                    *failed.borrow_mut() = Some(e);
                    out.iter_mut().for_each(|o| *o = 0.0);
                }
            }
        };
        let precond = |v: &[f64], out: &mut [f64]| {
            out.copy_from_slice(v);
            self.precond.solve_in_place(out);
        };
        let mut x = vec![0.0; g.len()];
        let opts = GmresOptions {
            rtol,
            restart: 80,
            max_iter: 800,
        };
        let stats = gmres(apply, precond, b.values(), &mut x, opts);
        if let Some(e) = failed.into_inner() {
            return Err(e);
        }
        Ok((ScalarField::from_values(&g, x)?, accept_stagnation(stats, accept)?))
    }

    /// One linear solve of `(A + beta + U d_x + Q_stat) u = p0`.
    pub fn linear_solve(&self) -> Result<ScalarField> {
        let g = self.grid;
        let apply = |v: &[f64], out: &mut [f64]| {
            let h = ScalarField::from_values(&g, v.to_vec()).expect("grid length");
            let r = self.linear_part(&h).expect("same grid");
            out.copy_from_slice(r.values());
        };
        let precond = |v: &[f64], out: &mut [f64]| {
            out.copy_from_slice(v);
            self.precond.solve_in_place(out);
        };
        let mut x = vec![0.0; g.len()];
        let opts = GmresOptions {
            rtol: GMRES_FLOOR,
            restart: 80,
            max_iter: 800,
        };
        accept_stagnation(gmres(apply, precond, self.config.p0.values(), &mut x, opts), 1e-10)?;
        ScalarField::from_values(&g, x)
    }

    /// Damped Newton with backtracking on `||R||^2 / 2`.
    pub fn newton(&self, guess: &ScalarField, opts: &NewtonOptions) -> Result<NewtonOutcome> {
        self.grid.check_same(guess.grid())?;
        let tol = opts.tol.unwrap_or_else(|| certificate_tol(&self.config.p0));
        let mut u = guess.clone();
        let mut r = self.residual(&u)?;
        let mut rn = norm_l2(&r);
        let mut history = vec![rn];
        let done = |u, rn, it, conv, history, failure| NewtonOutcome {
            u,
            residual_norm: rn,
            iterations: it,
            converged: conv,
            residual_history: history,
            failure,
        };
        for it in 0..opts.max_iter {
            if rn <= tol {
                return Ok(done(u, rn, it, true, history, None));
            }
            let lin = Linearization::new(&self.airy, &u, &self.config.kind)?;
            let rtol = (0.1 * tol / rn).clamp(GMRES_FLOOR, 1e-3);
            let (delta, _) = match self.jacobian_solve(&lin, &-&r, rtol, 1e-3) {
                Ok(x) => x,
                Err(Error::SolverDivergence { residual, .. }) => {
                    return Ok(done(u, rn, it, false, history, Some(format!("linear solve stalled at {residual:e}"))))
                }
                Err(e) => return Err(e),
            };
            let phi0 = 0.5 * rn * rn;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let trial = ScalarField::lincomb(1.0, &u, lambda, &delta);
                let rt = self.residual(&trial)?;
                let rtn = norm_l2(&rt);
                if rtn.is_finite() && 0.5 * rtn * rtn <= phi0 * (1.0 - 2e-4 * lambda) {
                    accepted = Some((trial, rt, rtn));
                    break;
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((nu, nr, nrn)) => {
                    u = nu;
                    r = nr;
                    rn = nrn;
                    history.push(rn);
                }
                None => {
                    let converged = rn <= tol;
                    return Ok(done(u, rn, it, converged, history, Some("line search stalled".into())));
                }
            }
        }
        let converged = rn <= tol;
        let failure = (!converged).then(|| format!("no convergence in {} iterations", opts.max_iter));
        Ok(done(u, rn, opts.max_iter, converged, history, failure))
    }
}

/// Static residual `A u + beta u + f(u) + U u_x + Q_stat u - p0`.
pub fn static_residual(u: &ScalarField, config: &SimConfig) -> Result<ScalarField> {
    StationaryProblem::new(config, u.grid())?.residual(u)
}

pub fn newton_solve(u_guess: &ScalarField, config: &SimConfig) -> Result<NewtonOutcome> {
    StationaryProblem::new(config, u_guess.grid())?.newton(u_guess, &NewtonOptions::default())
}

/// Parameters an equilibrium was computed under.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub speed: f64,
    pub k: f64,
    pub beta: f64,
    pub load_norm: f64,
    /// Continuation parameter value, when found by continuation.
    pub path_value: Option<f64>,
}

impl ParamSnapshot {
    pub fn of(config: &SimConfig) -> Self {
        Self {
            speed: config.aero.u,
            k: config.k,
            beta: config.beta,
            load_norm: norm_l2(&config.p0),
            path_value: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub u: ScalarField,
    pub residual_norm: f64,
    pub params: ParamSnapshot,
}

/// Catalog of certified, pairwise distinct equilibria.
#[derive(Clone, Debug)]
pub struct EquilibriumSet {
    members: Vec<Equilibrium>,
    dedup_tol: f64,
}

impl Default for EquilibriumSet {
    fn default() -> Self {
        Self::new(1e-5)
    }
}

impl EquilibriumSet {
    pub fn new(dedup_tol: f64) -> Self {
        Self {
            members: Vec::new(),
            dedup_tol,
        }
    }

    pub fn members(&self) -> &[Equilibrium] {
        &self.members
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn dedup_tol(&self) -> f64 {
        self.dedup_tol
    }

    /// Adds a member; returns its index, or `None` when it duplicates an
    /// existing one. Uncertified members are rejected.
    pub fn insert(&mut self, u: ScalarField, residual_norm: f64, params: ParamSnapshot) -> Result<Option<usize>> {
        let tol = 1e-9 * (1.0 + params.load_norm);
        if !(residual_norm <= tol) {
            return Err(invalid(
                "equilibrium",
                format!("residual {residual_norm:e} exceeds certificate {tol:e}"),
            ));
        }
        if let Some(first) = self.members.first() {
            first.u.grid().check_same(u.grid())?;
        }
        let dup = self
            .members
            .iter()
            .any(|m| norm_l2(&laplacian(&(&m.u - &u))) <= self.dedup_tol);
        if dup {
            return Ok(None);
        }
        self.members.push(Equilibrium {
            u,
            residual_norm,
            params,
        });
        Ok(Some(self.members.len() - 1))
    }

    pub fn insert_outcome(&mut self, out: &NewtonOutcome, config: &SimConfig) -> Result<Option<usize>> {
        if !out.converged {
            return Err(invalid("equilibrium", "Newton iteration did not converge"));
        }
        self.insert(out.u.clone(), out.residual_norm, ParamSnapshot::of(config))
    }
}

/// `min over members of (||Lap(u - u_hat)||^2 + ||u_t||^2)^(1/2)` with the
/// index of the nearest member.
pub fn distance_to_set(u: &ScalarField, u_t: &ScalarField, set: &EquilibriumSet) -> Result<(f64, usize)> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let vt = norm_l2(u_t).powi(2);
    let mut best = (f64::INFINITY, 0);
    for (i, m) in set.members.iter().enumerate() {
        m.u.grid().check_same(u.grid())?;
        let d = (norm_l2(&laplacian(&(u - &m.u))).powi(2) + vt).sqrt();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best)
}

/// First critical value of the uniaxial compression on the bare plate and
/// its mode: the smallest `gamma` with `A phi + gamma phi_xx = 0`, by power
/// iteration on `A^-1 (-d_xx)`. The mode is normalized to unit L2 norm.
pub fn critical_compression(grid: &PlateGrid) -> Result<(f64, ScalarField)> {
    let solver = ClampedSolver::new(grid)?;
    let neg_dxx = |u: &ScalarField| second_derivatives(u).0.scaled(-1.0);
    let mut phi = ScalarField::from_fn(grid, |x, y| {
        let (sx, sy) = (
            ((x - grid.x0()) / grid.lx() * std::f64::consts::PI).sin(),
            ((y - grid.y0()) / grid.ly() * std::f64::consts::PI).sin(),
        );
        (sx * sy).powi(2) * (1.0 + 0.1 * (x - grid.x0()) / grid.lx())
    });
    let mut gamma = f64::INFINITY;
    for _ in 0..500 {
        let (next, _) = solver.solve(&neg_dxx(&phi))?;
        let n = norm_l2(&next);
        let next = next.scaled(1.0 / n);
        // Rayleigh quotient <A phi, phi> / <-phi_xx, phi>
        let g = inner_unchecked(&biharmonic_clamped(&next), &next) / inner_unchecked(&neg_dxx(&next), &next);
        let done = (g - gamma).abs() <= 1e-13 * g;
        phi = next;
        gamma = g;
        if done {
            break;
        }
    }
    Ok((gamma, phi))
}

/// Which parameter a continuation path moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationAxis {
    /// Flow speed `U`.
    FlowSpeed,
    /// Multiplier on the configured `p0`.
    LoadAmplitude,
    /// Uniaxial compression intensity of the in-plane load (von Karman).
    Compression,
}

impl ContinuationAxis {
    pub fn configure(self, base: &SimConfig, grid: &PlateGrid, value: f64) -> Result<SimConfig> {
        let mut c = base.clone();
        match self {
            ContinuationAxis::FlowSpeed => c.aero.u = value,
            ContinuationAxis::LoadAmplitude => c.p0 = base.p0.scaled(value),
            ContinuationAxis::Compression => match c.kind {
                NonlinearityKind::VonKarman(_) => c.kind = NonlinearityKind::VonKarman(InPlaneLoad::uniaxial(grid, value)),
                NonlinearityKind::Berger { .. } => {
                    return Err(invalid("axis", "compression continuation needs the von Karman nonlinearity"))
                }
            },
        }
        c.validate(grid)?;
        Ok(c)
    }
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub value: f64,
    pub u: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub branch: Vec<BranchPoint>,
    pub set: EquilibriumSet,
    /// Path value at which Newton failed, if it did.
    pub lost_at: Option<f64>,
}

/// Natural-parameter continuation from `seed`, each solve starting from the
/// previous solution. Stops at the first Newton failure.
pub fn continuation(
    path: &[f64],
    axis: ContinuationAxis,
    config: &SimConfig,
    grid: &PlateGrid,
    seed: &ScalarField,
) -> Result<ContinuationResult> {
    if path.is_empty() {
        return Err(invalid("path", "continuation path is empty"));
    }
    let mono_up = path.windows(2).all(|w| w[1] >= w[0]);
    let mono_down = path.windows(2).all(|w| w[1] <= w[0]);
    if !(mono_up || mono_down) {
        return Err(invalid("path", "continuation path must be monotone"));
    }
    let mut guess = seed.clone();
    let mut branch = Vec::new();
    let mut set = EquilibriumSet::default();
    let mut lost_at = None;
    for &value in path {
        let c = axis.configure(config, grid, value)?;
        let prob = StationaryProblem::new(&c, grid)?;
        let out = prob.newton(&guess, &NewtonOptions::default())?;
        if !out.converged {
            lost_at = Some(value);
            break;
        }
        let mut snap = ParamSnapshot::of(&c);
        snap.path_value = Some(value);
        set.insert(out.u.clone(), out.residual_norm, snap)?;
        branch.push(BranchPoint {
            value,
            u: out.u.clone(),
            residual_norm: out.residual_norm,
            iterations: out.iterations,
        });
        guess = out.u;
    }
    Ok(ContinuationResult { branch, set, lost_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::AeroParams;
    use crate::grid::clamped_mode;

    fn config(g: &PlateGrid, u: f64) -> SimConfig {
        let mut c = SimConfig::new(g, u).unwrap();
        c.aero = AeroParams::new(u, 16, 16).unwrap();
        c
    }

    #[test]
    fn trivial_equilibrium() {
        let g = PlateGrid::unit_square(10).unwrap();
        let c = config(&g, 0.0);
        let r = static_residual(&ScalarField::zeros(&g), &c).unwrap();
        assert_eq!(r.max_abs(), 0.0);
        let out = newton_solve(&ScalarField::zeros(&g), &c).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn loaded_newton_converges_quadratically() {
        let g = PlateGrid::unit_square(12).unwrap();
        let mut c = config(&g, 0.3);
        c.p0 = ScalarField::constant(&g, 3000.0);
        let out = newton_solve(&ScalarField::zeros(&g), &c).unwrap();
        assert!(out.converged, "{:?}", out.residual_history);
        assert!(out.residual_norm <= certificate_tol(&c.p0));
        assert!(out.u.max_abs() > 0.5, "nonlinear regime expected, got {}", out.u.max_abs());
        let h = &out.residual_history;
        let n = h.len();
        assert!(n >= 3);
        // tail contracts much faster than linearly
        assert!(h[n - 1] <= 1e-3 * h[n - 2] || h[n - 1] <= certificate_tol(&c.p0));
    }

    #[test]
    fn equilibrium_set_rules() {
        let g = PlateGrid::unit_square(9).unwrap();
        let mut set = EquilibriumSet::default();
        let snap = ParamSnapshot {
            speed: 0.0,
            k: 0.0,
            beta: 0.0,
            load_norm: 0.0,
            path_value: None,
        };
        assert!(set.insert(ScalarField::zeros(&g), 1e-3, snap.clone()).is_err());
        assert_eq!(set.insert(ScalarField::zeros(&g), 0.0, snap.clone()).unwrap(), Some(0));
        assert_eq!(set.insert(ScalarField::constant(&g, 1e-12), 0.0, snap.clone()).unwrap(), None);
        let m = clamped_mode(&g, 1, 1);
        let z = ScalarField::zeros(&g);
        let d1 = distance_to_set(&m, &z, &set).unwrap().0;
        set.insert(m.scaled(0.5), 0.0, snap).unwrap();
        let d2 = distance_to_set(&m, &z, &set).unwrap().0;
        assert!(d2 <= d1);
        assert_eq!(distance_to_set(&m.scaled(0.5), &z, &set).unwrap(), (0.0, 1));
        assert!(matches!(
            distance_to_set(&m, &z, &EquilibriumSet::default()),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn continuation_path_of_one_matches_newton() {
        let g = PlateGrid::unit_square(10).unwrap();
        let mut c = config(&g, 0.2);
        c.p0 = ScalarField::constant(&g, 100.0);
        let res = continuation(&[1.0], ContinuationAxis::LoadAmplitude, &c, &g, &ScalarField::zeros(&g)).unwrap();
        let direct = newton_solve(&ScalarField::zeros(&g), &c).unwrap();
        assert_eq!(res.branch.len(), 1);
        assert!(norm_l2(&(&res.branch[0].u - &direct.u)) <= 1e-12 * norm_l2(&direct.u));
        assert!(continuation(&[0.1, 0.3, 0.2], ContinuationAxis::FlowSpeed, &c, &g, &direct.u).is_err());
    }
}
