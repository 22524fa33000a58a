//! Time integration of the delayed plate equation
//!
//! ```text
//! u_tt + A u + (k + 1) u_t + beta u + f(u) = p0 - U u_x - q(t)
//! ```
//!
//! `A`, `beta` and the viscous term are implicit (generalized-alpha, which
//! damps modes the step cannot resolve); the restoring force, convection and
//! delayed potential are explicit, extrapolated linearly from the two
//! previous steps.

use serde::{Deserialize, Serialize};

use crate::aero::{t_star, AeroParams, DelayHistory, DelayKernel};
use crate::diagnostics::{self, DiagnosticsRecord, Probes};
use crate::error::{invalid, Error, Result};
use crate::grid::{biharmonic_clamped, dx, inner_unchecked, PlateGrid, ScalarField};
use crate::linalg::{BandedCholesky, BandedSym};
use crate::vonkarman::{restoring_force, ClampedSolver, NonlinearityKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryInit {
    /// No motion before `t = 0`.
    Zero,
    /// The plate rested at `u0` over the whole window.
    Frozen,
    /// Linear growth from 0 at `-t*` to `u0` at `0`.
    Ramp,
}

/// Whether the flow acts on the plate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowCoupling {
    /// Flow damping `u_t`, convection `U u_x` and delayed potential `q`.
    Full,
    /// Bare plate: only `k u_t` damping, no convection, no `q`. Used for
    /// verifying the integrator on conservative problems.
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Flow speed and quadrature of the delayed potential.
    pub aero: AeroParams,
    pub k: f64,
    pub beta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub kind: NonlinearityKind,
    pub p0: ScalarField,
    pub history_init: HistoryInit,
    pub coupling: FlowCoupling,
    /// High-frequency spectral radius of the time stepper, in `[0, 1]`;
    /// 1 conserves energy and leaves unresolved modes undamped.
    pub rho_inf: f64,
}

pub const DEFAULT_RHO_INF: f64 = 0.8;

/// Largest step the explicit convection and delay terms tolerate in practice.
pub fn default_dt(grid: &PlateGrid, u: f64) -> f64 {
    0.5 * grid.hx().min(grid.hy()) / (1.0 + u)
}

impl SimConfig {
    /// Unloaded, undamped von Karman plate at flow speed `u` with the default
    /// step and a zero horizon.
    pub fn new(grid: &PlateGrid, u: f64) -> Result<Self> {
        let aero = AeroParams::with_speed(u)?;
        Ok(Self {
            aero,
            k: 0.0,
            beta: 0.0,
            dt: default_dt(grid, u),
            t_end: 0.0,
            kind: NonlinearityKind::von_karman_unloaded(grid),
            p0: ScalarField::zeros(grid),
            history_init: HistoryInit::Zero,
            coupling: FlowCoupling::Full,
            rho_inf: DEFAULT_RHO_INF,
        })
    }

    pub fn speed(&self) -> f64 {
        self.aero.u
    }

    /// Total viscous coefficient on the left-hand side.
    pub fn damping(&self) -> f64 {
        match self.coupling {
            FlowCoupling::Full => self.k + 1.0,
            FlowCoupling::Off => self.k,
        }
    }

    pub fn validate(&self, grid: &PlateGrid) -> Result<()> {
        self.aero.validate()?;
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(invalid("k", format!("damping must be >= 0, got {}", self.k)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.rho_inf) {
            return Err(invalid("rho_inf", format!("must lie in [0, 1], got {}", self.rho_inf)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        grid.check_same(self.p0.grid())?;
        if !self.p0.is_finite() {
            return Err(invalid("p0", "non-finite load"));
        }
        self.kind.validate(grid)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub step_index: usize,
    pub u: ScalarField,
    pub u_t: ScalarField,
    /// Algorithmic acceleration of the time stepper.
    pub u_tt: ScalarField,
    pub hist: DelayHistory,
    /// Delayed potential at `t`.
    pub q: ScalarField,
    /// Explicit right-hand side at the current and previous step.
    pub force: ScalarField,
    pub force_prev: ScalarField,
    /// Running `int_0^t k ||u_t||^2`.
    pub diss_integral: f64,
    t0: f64,
}

/// Cached operators for one configuration.
#[derive(Clone, Debug)]
pub struct Integrator {
    grid: PlateGrid,
    config: SimConfig,
    t_star: f64,
    airy: ClampedSolver,
    kernel: Option<DelayKernel>,
    coef: AlphaCoefficients,
    system: BandedCholesky,
}

/// Chung-Hulbert parameters for a given `rho_inf`.
#[derive(Clone, Copy, Debug)]
struct AlphaCoefficients {
    am: f64,
    af: f64,
    beta: f64,
    gamma: f64,
}

impl AlphaCoefficients {
    fn new(rho: f64) -> Self {
        let am = (2.0 * rho - 1.0) / (rho + 1.0);
        let af = rho / (rho + 1.0);
        let gamma = 0.5 - am + af;
        Self {
            am,
            af,
            beta: 0.25 * (1.0 - am + af).powi(2),
            gamma,
        }
    }
}

impl Integrator {
    pub fn new(config: &SimConfig, grid: &PlateGrid) -> Result<Self> {
        config.validate(grid)?;
        let (dt, c) = (config.dt, config.damping());
        let coef = AlphaCoefficients::new(config.rho_inf);
        let kf = (1.0 - coef.af) * coef.beta * dt * dt;
        let diag = (1.0 - coef.am) + c * (1.0 - coef.af) * coef.gamma * dt + kf * config.beta;
        let m = BandedSym::clamped_biharmonic(grid, kf, diag);
        let kernel = match config.coupling {
            FlowCoupling::Full => Some(DelayKernel::new(grid, &config.aero)?),
            FlowCoupling::Off => None,
        };
        Ok(Self {
            grid: *grid,
            config: config.clone(),
            t_star: t_star(grid, config.aero.u)?,
            airy: ClampedSolver::new(grid)?,
            kernel,
            coef,
            system: BandedCholesky::factor(&m)?,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }
    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }
    pub fn t_star(&self) -> f64 {
        self.t_star
    }
    pub fn airy_solver(&self) -> &ClampedSolver {
        &self.airy
    }

    /// `(A + beta) u`
    fn stiffness(&self, u: &ScalarField) -> ScalarField {
        let mut k = biharmonic_clamped(u);
        if self.config.beta != 0.0 {
            k.axpy(self.config.beta, u);
        }
        k
    }

    fn delayed(&self, hist: &DelayHistory) -> Result<ScalarField> {
        match &self.kernel {
            Some(k) => k.apply(hist),
            None => Ok(ScalarField::zeros(&self.grid)),
        }
    }

    /// `p0 - f(u) - U u_x - q`
    fn explicit_force(&self, u: &ScalarField, q: &ScalarField) -> Result<ScalarField> {
        let mut f = self.config.p0.clone();
        f.axpy(-1.0, &restoring_force(&self.airy, u, &self.config.kind)?);
        if self.config.coupling == FlowCoupling::Full {
            if self.config.aero.u != 0.0 {
                f.axpy(-self.config.aero.u, &dx(u));
            }
            f.axpy(-1.0, q);
        }
        Ok(f)
    }

    pub fn init(&self, u0: &ScalarField, u1: &ScalarField) -> Result<SimState> {
        self.init_at(0.0, u0, u1)
    }

    pub fn init_at(&self, t0: f64, u0: &ScalarField, u1: &ScalarField) -> Result<SimState> {
        let g = &self.grid;
        g.check_same(u0.grid())?;
        g.check_same(u1.grid())?;
        if !u0.is_finite() || !u1.is_finite() {
            return Err(Error::NonFinite { what: "initial data", t: t0 });
        }
        let (dt, ts) = (self.config.dt, self.t_star);
        let zero = ScalarField::zeros(g);
        let hist = match self.config.history_init {
            HistoryInit::Frozen => {
                let mut h = DelayHistory::frozen(g, dt, ts, t0 - dt, u0)?;
                h.push(t0, u0.clone(), u1.clone())?;
                h
            }
            HistoryInit::Zero => DelayHistory::from_fn(g, dt, ts, t0, |tau| {
                if tau >= t0 {
                    (u0.clone(), u1.clone())
                } else {
                    (zero.clone(), zero.clone())
                }
            })?,
            HistoryInit::Ramp => DelayHistory::from_fn(g, dt, ts, t0, |tau| {
                let r = 1.0 + (tau - t0) / ts;
                if tau >= t0 {
                    (u0.clone(), u1.clone())
                } else if r <= 0.0 {
                    (zero.clone(), zero.clone())
                } else {
                    (u0.scaled(r), u0.scaled(1.0 / ts))
                }
            })?,
        };
        let q = self.delayed(&hist)?;
        let force = self.explicit_force(u0, &q)?;
        let mut acc = force.clone();
        acc.axpy(-self.config.damping(), u1);
        acc.axpy(-1.0, &self.stiffness(u0));
        Ok(SimState {
            t: t0,
            step_index: 0,
            u: u0.clone(),
            u_t: u1.clone(),
            u_tt: acc,
            hist,
            q,
            force_prev: force.clone(),
            force,
            diss_integral: 0.0,
            t0,
        })
    }

    /// Advances the state by one step in place.
    pub fn step(&self, s: &mut SimState) -> Result<()> {
        let (dt, c) = (self.config.dt, self.config.damping());
        let AlphaCoefficients { am, af, beta, gamma } = self.coef;
        // u_{n+1} = upred + beta dt^2 a_{n+1}, v_{n+1} = vpred + gamma dt a_{n+1}
        let mut upred = s.u.clone();
        upred.axpy(dt, &s.u_t);
        upred.axpy((0.5 - beta) * dt * dt, &s.u_tt);
        let vpred = ScalarField::lincomb(1.0, &s.u_t, (1.0 - gamma) * dt, &s.u_tt);

        // F_{n+1} ~ 2 F_n - F_{n-1}, weighted at n + 1 - af
        let mut rhs = ScalarField::lincomb(2.0 - af, &s.force, -(1.0 - af), &s.force_prev);
        rhs.axpy(-am, &s.u_tt);
        rhs.axpy(-c * (1.0 - af), &vpred);
        rhs.axpy(-c * af, &s.u_t);
        let ualpha = ScalarField::lincomb(1.0 - af, &upred, af, &s.u);
        rhs.axpy(-1.0, &self.stiffness(&ualpha));
        self.system.solve_in_place(rhs.values_mut());
        let a_new = rhs;
        let u_new = ScalarField::lincomb(1.0, &upred, beta * dt * dt, &a_new);
        let v_new = ScalarField::lincomb(1.0, &vpred, gamma * dt, &a_new);

        let t_new = s.t0 + (s.step_index + 1) as f64 * dt;
        if !u_new.is_finite() || !v_new.is_finite() {
            return Err(Error::NonFinite { what: "plate state", t: t_new });
        }
        s.hist.push(t_new, u_new.clone(), v_new.clone())?;
        let q = self.delayed(&s.hist)?;
        // an overflowing bracket surfaces as a NaN residual in the Airy solve
        let force = self.explicit_force(&u_new, &q).map_err(|e| match e {
            Error::SolverDivergence { residual, .. } if !residual.is_finite() => Error::NonFinite {
                what: "explicit force",
                t: t_new,
            },
            e => e,
        })?;
        if !force.is_finite() {
            return Err(Error::NonFinite { what: "explicit force", t: t_new });
        }
        let k = self.config.k;
        s.diss_integral += 0.5 * dt * k * (inner_unchecked(&s.u_t, &s.u_t) + inner_unchecked(&v_new, &v_new));
        s.force_prev = std::mem::replace(&mut s.force, force);
        s.q = q;
        s.u = u_new;
        s.u_t = v_new;
        s.u_tt = a_new;
        s.t = t_new;
        s.step_index += 1;
        Ok(())
    }
}

/// Full run output.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    /// Set when the run stopped early; `records` ends at the last valid state.
    pub aborted: Option<Error>,
}

/// Integrates to `t_end`, recording diagnostics every `probes.stride` steps
/// and at the final step.
pub fn run(config: &SimConfig, grid: &PlateGrid, u0: &ScalarField, u1: &ScalarField, probes: &Probes) -> Result<Trajectory> {
    let integ = Integrator::new(config, grid)?;
    let mut state = integ.init(u0, u1)?;
    run_from(&integ, &mut state, probes)
}

/// Continues from an existing state to the configured `t_end`.
pub fn run_from(integ: &Integrator, state: &mut SimState, probes: &Probes) -> Result<Trajectory> {
    let steps = integ.config().steps();
    let stride = probes.stride.max(1);
    let mut records = vec![diagnostics::record(integ, state, probes)?];
    let mut aborted = None;
    for n in 1..=steps {
        if let Err(e) = integ.step(state) {
            aborted = Some(e);
            break;
        }
        if n % stride == 0 || n == steps {
            match diagnostics::record(integ, state, probes) {
                Ok(r) => records.push(r),
                Err(e) => {
                    aborted = Some(e);
                    break;
                }
            }
        }
    }
    Ok(Trajectory {
        records,
        final_state: state.clone(),
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bending_norm_sq, clamped_mode, norm_l2};

    fn grid() -> PlateGrid {
        PlateGrid::unit_square(12).unwrap()
    }

    fn cfg(g: &PlateGrid) -> SimConfig {
        let mut c = SimConfig::new(g, 0.3).unwrap();
        c.aero = AeroParams::new(0.3, 16, 16).unwrap();
        c
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid();
        let mut c = cfg(&g);
        c.t_end = 20.0 * c.dt;
        let integ = Integrator::new(&c, &g).unwrap();
        let z = ScalarField::zeros(&g);
        let mut s = integ.init(&z, &z).unwrap();
        assert_eq!(s.q.max_abs(), 0.0);
        for _ in 0..20 {
            integ.step(&mut s).unwrap();
        }
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(s.u_t.max_abs(), 0.0);
    }

    #[test]
    fn frozen_and_ramp_histories() {
        let g = grid();
        let mut c = cfg(&g);
        let u0 = clamped_mode(&g, 1, 1);
        let ts = t_star(&g, 0.3).unwrap();
        c.dt = ts / 20.0;
        c.history_init = HistoryInit::Frozen;
        let s = Integrator::new(&c, &g).unwrap().init(&u0, &ScalarField::zeros(&g)).unwrap();
        assert!(s.hist.slots().all(|sl| sl.u == u0));
        c.history_init = HistoryInit::Ramp;
        let s = Integrator::new(&c, &g).unwrap().init(&u0, &ScalarField::zeros(&g)).unwrap();
        let half = s.hist.slot(10);
        assert!((half.t + ts / 2.0).abs() < 1e-12);
        assert!(norm_l2(&(&half.u - &u0.scaled(0.5))) <= 1e-14 * norm_l2(&u0));
        assert_eq!(s.hist.slot(s.hist.len() - 1).u.max_abs(), 0.0);
    }

    #[test]
    fn newmark_conserves_linear_energy() {
        let g = grid();
        let mut c = cfg(&g);
        c.coupling = FlowCoupling::Off;
        c.kind = NonlinearityKind::linear();
        c.beta = 2.0;
        c.rho_inf = 1.0;
        let integ = Integrator::new(&c, &g).unwrap();
        let u0 = clamped_mode(&g, 2, 1);
        let u1 = clamped_mode(&g, 1, 3).scaled(5.0);
        let energy = |s: &SimState| {
            0.5 * (inner_unchecked(&s.u_t, &s.u_t) + bending_norm_sq(&s.u) + 2.0 * inner_unchecked(&s.u, &s.u))
        };
        let mut s = integ.init(&u0, &u1).unwrap();
        let e0 = energy(&s);
        for _ in 0..1000 {
            integ.step(&mut s).unwrap();
        }
        assert!(((energy(&s) - e0) / e0).abs() <= 1e-8, "{} vs {e0}", energy(&s));
    }

    #[test]
    fn nan_input_rejected() {
        let g = grid();
        let c = cfg(&g);
        let integ = Integrator::new(&c, &g).unwrap();
        let mut bad = ScalarField::zeros(&g);
        bad.values_mut()[3] = f64::NAN;
        assert!(matches!(
            integ.init(&bad, &ScalarField::zeros(&g)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn clock_is_not_accumulated() {
        let g = grid();
        let c = cfg(&g);
        let integ = Integrator::new(&c, &g).unwrap();
        let z = ScalarField::zeros(&g);
        let mut s = integ.init(&z, &z).unwrap();
        for _ in 0..37 {
            integ.step(&mut s).unwrap();
        }
        assert_eq!(s.t, 37.0 * c.dt);
    }
}
