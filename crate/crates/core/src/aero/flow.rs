//! Local reconstruction of the flow potential above the plate.
//!
//! With the downwash `g = u_t + U u_x` (extended by zero) and the footprint
//! shifts `k1 = U s + r sin(theta)`, `k2 = r cos(theta)`, `r = sqrt(s^2 - z^2)`,
//!
//! ```text
//! phi   = -(1/2pi) int_z^t* int g(x - k1, y - k2, t - s)
//! phi_t =  (1/2pi) { int g(t*) - int g(z) + U int int g_x + int int (s/r) M_theta g }
//! ```
//!
//! All `s`-integrals use `s = sqrt(z^2 + sigma^2)`, so `r = sigma`, the weight
//! `s/r` disappears and `ds = (sigma/s) d sigma` is smooth.

use std::f64::consts::PI;

use super::history::lag_position;
use super::kernel::{apply_stencils, LagStencil, StencilBuilder};
use super::{t_star, AeroParams, DelayHistory, DelayKernel};
use crate::error::{invalid, Error, Result};
use crate::grid::{dx, dy, eval_extended, norm_l2, PlateGrid, ScalarField};

/// Downwash `g` and its gradient on every stored slot.
#[derive(Clone, Debug)]
pub struct FlowFields {
    grid: PlateGrid,
    params: AeroParams,
    t_star: f64,
    dt: f64,
    t_now: f64,
    g: Vec<ScalarField>,
    gx: Vec<ScalarField>,
    gy: Vec<ScalarField>,
}

impl FlowFields {
    pub fn new(hist: &DelayHistory, params: &AeroParams) -> Result<Self> {
        params.validate()?;
        let t_now = hist.t_now().ok_or(Error::HistoryTooShort {
            needed: 1,
            available: 0,
        })?;
        let u = params.u;
        let (mut g, mut gx, mut gy) = (Vec::new(), Vec::new(), Vec::new());
        for s in hist.slots() {
            let ux = dx(&s.u);
            g.push(ScalarField::lincomb(1.0, &s.v, u, &ux));
            gx.push(ScalarField::lincomb(1.0, &dx(&s.v), u, &s.uxx));
            gy.push(ScalarField::lincomb(1.0, &dy(&s.v), u, &s.uxy));
        }
        Ok(Self {
            grid: *hist.grid(),
            params: *params,
            t_star: t_star(hist.grid(), u)?,
            dt: hist.dt(),
            t_now,
            g,
            gx,
            gy,
        })
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    /// Downwash field at `t_now - lag`.
    pub fn downwash_at_lag(&self, lag: f64) -> Result<ScalarField> {
        let (m, w) = lag_position(self.dt, self.g.len(), lag)?;
        if w == 0.0 {
            Ok(self.g[m].clone())
        } else {
            Ok(ScalarField::lincomb(1.0 - w, &self.g[m], w, &self.g[m + 1]))
        }
    }

    fn sample(&self, fields: &[ScalarField], x: f64, y: f64, lag: f64) -> Result<f64> {
        let (m, w) = lag_position(self.dt, fields.len(), lag)?;
        let a = eval_extended(&fields[m], x, y);
        if w == 0.0 {
            Ok(a)
        } else {
            Ok((1.0 - w) * a + w * eval_extended(&fields[m + 1], x, y))
        }
    }

    fn offset(&self, t: f64) -> Result<f64> {
        let off = self.t_now - t;
        if off < -1e-12 * self.dt {
            return Err(invalid("t", format!("query time {t} is after the newest slot {}", self.t_now)));
        }
        Ok(off.max(0.0))
    }

    /// `phi` at `p = (x, y, z)` and time `t`, by direct pointwise quadrature.
    pub fn phi(&self, p: [f64; 3], t: f64) -> Result<f64> {
        let [x, y, z] = p;
        check_height(z)?;
        if t - z < 0.0 || z >= self.t_star {
            return Ok(0.0);
        }
        let off = self.offset(t)?;
        let u = self.params.u;
        let tn = self.params.theta_n;
        let mut total = 0.0;
        for n in s_nodes(z, self.t_star, self.params.s_n) {
            let mut ring = 0.0;
            for i in 0..tn {
                let (st, ct) = (2.0 * PI * i as f64 / tn as f64).sin_cos();
                let (k1, k2) = (u * n.s + n.sigma * st, n.sigma * ct);
                ring += self.sample(&self.g, x - k1, y - k2, off + n.s)?;
            }
            total += n.w_plain * ring;
        }
        Ok(-total / tn as f64)
    }

    /// `phi_t` at `p = (x, y, z)` and time `t`, by direct pointwise quadrature.
    pub fn phi_t(&self, p: [f64; 3], t: f64) -> Result<f64> {
        let [x, y, z] = p;
        check_height(z)?;
        if t - z < 0.0 || z >= self.t_star {
            return Ok(0.0);
        }
        let off = self.offset(t)?;
        let (u, ts) = (self.params.u, self.t_star);
        let tn = self.params.theta_n;
        let rt = (ts * ts - z * z).sqrt();
        let mut end = 0.0;
        for i in 0..tn {
            let (st, ct) = (2.0 * PI * i as f64 / tn as f64).sin_cos();
            end += self.sample(&self.g, x - u * ts - rt * st, y - rt * ct, off + ts)?;
        }
        let start = self.sample(&self.g, x - u * z, y, off + z)?;
        let mut body = 0.0;
        for n in s_nodes(z, ts, self.params.s_n) {
            for i in 0..tn {
                let (st, ct) = (2.0 * PI * i as f64 / tn as f64).sin_cos();
                let (px, py) = (x - u * n.s - n.sigma * st, y - n.sigma * ct);
                let gx = self.sample(&self.gx, px, py, off + n.s)?;
                let gy = self.sample(&self.gy, px, py, off + n.s)?;
                body += u * n.w_plain * gx + n.w_sigma * (st * gx + ct * gy);
            }
        }
        Ok((end + body) / tn as f64 - start)
    }
}

fn check_height(z: f64) -> Result<()> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(invalid("z", format!("probe height must be >= 0, got {z}")));
    }
    Ok(())
}

/// Node of the `s`-quadrature in the `sigma` variable.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SNode {
    pub s: f64,
    pub sigma: f64,
    /// trapezoid weight in `sigma`; integrates `(s/r) F ds`
    pub w_sigma: f64,
    /// integrates `F ds`
    pub w_plain: f64,
}

pub(crate) fn s_nodes(z: f64, t_star: f64, n: usize) -> Vec<SNode> {
    let smax = (t_star * t_star - z * z).max(0.0).sqrt();
    let h = smax / n as f64;
    (0..=n)
        .map(|j| {
            let sigma = j as f64 * h;
            let s = (z * z + sigma * sigma).sqrt();
            let w = if j == 0 || j == n { 0.5 * h } else { h };
            let ratio = if s > 0.0 { sigma / s } else { 1.0 };
            SNode {
                s,
                sigma,
                w_sigma: w,
                w_plain: w * ratio,
            }
        })
        .collect()
}

/// Lattice-stencil evaluation of `phi` and `phi_t` on every node of one
/// horizontal plane `z`.
#[derive(Clone, Debug)]
pub struct PlaneFlow {
    grid: PlateGrid,
    z: f64,
    t_star: f64,
    phi: Vec<LagStencil<1>>,
    phi_t: Vec<LagStencil<3>>,
}

impl PlaneFlow {
    pub fn new(grid: &PlateGrid, params: &AeroParams, z: f64) -> Result<Self> {
        params.validate()?;
        check_height(z)?;
        let ts = t_star(grid, params.u)?;
        let (u, tn) = (params.u, params.theta_n);
        let inv = 1.0 / tn as f64;
        let mut phi = Vec::new();
        let mut phi_t = Vec::new();
        if z < ts {
            let angles: Vec<(f64, f64)> = (0..tn).map(|i| (2.0 * PI * i as f64 / tn as f64).sin_cos()).collect();
            for n in s_nodes(z, ts, params.s_n) {
                let mut b1 = StencilBuilder::<1>::new();
                let mut b3 = StencilBuilder::<3>::new();
                for &(st, ct) in &angles {
                    let (a, b) = (-(u * n.s + n.sigma * st), -n.sigma * ct);
                    b1.add_shift(grid, a, b, [-n.w_plain * inv]);
                    b3.add_shift(
                        grid,
                        a,
                        b,
                        [0.0, (u * n.w_plain + n.w_sigma * st) * inv, n.w_sigma * ct * inv],
                    );
                }
                phi.push(LagStencil {
                    lag: n.s,
                    entries: b1.finish(),
                });
                phi_t.push(LagStencil {
                    lag: n.s,
                    entries: b3.finish(),
                });
            }
            let rt = (ts * ts - z * z).sqrt();
            let mut end = StencilBuilder::<3>::new();
            for &(st, ct) in &angles {
                end.add_shift(grid, -(u * ts + rt * st), -rt * ct, [inv, 0.0, 0.0]);
            }
            phi_t.push(LagStencil {
                lag: ts,
                entries: end.finish(),
            });
            let mut start = StencilBuilder::<3>::new();
            start.add_shift(grid, -u * z, 0.0, [-1.0, 0.0, 0.0]);
            phi_t.push(LagStencil {
                lag: z,
                entries: start.finish(),
            });
        }
        Ok(Self {
            grid: *grid,
            z,
            t_star: ts,
            phi,
            phi_t,
        })
    }

    fn positions<const K: usize>(&self, ff: &FlowFields, lags: &[LagStencil<K>], off: f64) -> Result<Vec<(usize, f64)>> {
        lags.iter()
            .map(|l| lag_position(ff.dt, ff.g.len(), off + l.lag))
            .collect()
    }

    fn active(&self, ff: &FlowFields, off: f64) -> bool {
        self.z < self.t_star && ff.t_now - off - self.z >= 0.0
    }

    /// `phi` at time `t_now - off`, sampled at nodes shifted by `shift` lattice
    /// steps.
    pub fn phi(&self, ff: &FlowFields, off: f64, shift: (i32, i32)) -> Result<ScalarField> {
        self.grid.check_same(&ff.grid)?;
        if !self.active(ff, off) {
            return Ok(ScalarField::zeros(&self.grid));
        }
        let pos = self.positions(ff, &self.phi, off)?;
        let fields: Vec<[&[f64]; 1]> = ff.g.iter().map(|g| [g.values()]).collect();
        ScalarField::from_values(&self.grid, apply_stencils(&self.grid, &self.phi, &pos, &fields, shift))
    }

    /// `phi_t` at time `t_now - off`.
    pub fn phi_t(&self, ff: &FlowFields, off: f64) -> Result<ScalarField> {
        self.grid.check_same(&ff.grid)?;
        if !self.active(ff, off) {
            return Ok(ScalarField::zeros(&self.grid));
        }
        let pos = self.positions(ff, &self.phi_t, off)?;
        let fields: Vec<[&[f64]; 3]> = (0..ff.g.len())
            .map(|m| [ff.g[m].values(), ff.gx[m].values(), ff.gy[m].values()])
            .collect();
        ScalarField::from_values(&self.grid, apply_stencils(&self.grid, &self.phi_t, &pos, &fields, (0, 0)))
    }
}

pub fn reconstruct_phi(hist: &DelayHistory, params: &AeroParams, p: [f64; 3], t: f64) -> Result<f64> {
    FlowFields::new(hist, params)?.phi(p, t)
}

pub fn reconstruct_phi_t(hist: &DelayHistory, params: &AeroParams, p: [f64; 3], t: f64) -> Result<f64> {
    FlowFields::new(hist, params)?.phi_t(p, t)
}

/// `|| phi_t + U d_x phi + (u_t + U u_x) + q ||` on the plate at time `t`;
/// zero in the continuum.
pub fn trace_residual(hist: &DelayHistory, params: &AeroParams, grid: &PlateGrid, t: f64) -> Result<f64> {
    grid.check_same(hist.grid())?;
    let ff = FlowFields::new(hist, params)?;
    let off = ff.offset(t)?;
    let plane = PlaneFlow::new(grid, params, 0.0)?;
    let mut r = plane.phi_t(&ff, off)?;
    let phi_e = plane.phi(&ff, off, (1, 0))?;
    let phi_w = plane.phi(&ff, off, (-1, 0))?;
    r.axpy(params.u * 0.5 / grid.hx(), &(&phi_e - &phi_w));
    r.axpy(1.0, &ff.downwash_at_lag(off)?);
    r.axpy(1.0, &DelayKernel::new(grid, params)?.apply_at_offset(hist, off)?);
    Ok(norm_l2(&r))
}
