//! Delayed potential as a sum of shifted lattice stencils.
//!
//! For a fixed lag `s` and angle `theta` the footprint shift is the same for
//! every node, so bilinear interpolation of the shifted field reduces to four
//! fixed lattice offsets with fixed weights. Summing over the angular nodes
//! gives one sparse stencil per lag.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::{t_star, AeroParams, DelayHistory};
use crate::error::{Error, Result};
use crate::grid::{second_derivatives, PlateGrid, ScalarField};

#[derive(Clone, Debug)]
pub(crate) struct Entry<const K: usize> {
    pub di: i32,
    pub dj: i32,
    pub c: [f64; K],
}

#[derive(Clone, Debug)]
pub(crate) struct LagStencil<const K: usize> {
    pub lag: f64,
    pub entries: Vec<Entry<K>>,
}

/// Collects bilinear corner contributions of shifted samples.
#[derive(Default)]
pub(crate) struct StencilBuilder<const K: usize> {
    acc: BTreeMap<(i32, i32), [f64; K]>,
}

impl<const K: usize> StencilBuilder<K> {
    pub fn new() -> Self {
        Self { acc: BTreeMap::new() }
    }

    /// Adds `coef * f(x + a, y + b)` for a physical shift `(a, b)`.
    pub fn add_shift(&mut self, grid: &PlateGrid, a: f64, b: f64, coef: [f64; K]) {
        let (xs, ys) = (a / grid.hx(), b / grid.hy());
        let (ia, ib) = (xs.floor(), ys.floor());
        let (fa, fb) = (xs - ia, ys - ib);
        let (ia, ib) = (ia as i64, ib as i64);
        let corners = [
            (0, 0, (1.0 - fa) * (1.0 - fb)),
            (1, 0, fa * (1.0 - fb)),
            (0, 1, (1.0 - fa) * fb),
            (1, 1, fa * fb),
        ];
        let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
        for (ci, cj, w) in corners {
            let (di, dj) = (ia + ci, ib + cj);
            if w == 0.0 || di.abs() > nx + 1 || dj.abs() > ny + 1 {
                continue;
            }
            let e = self.acc.entry((dj as i32, di as i32)).or_insert([0.0; K]);
            for k in 0..K {
                e[k] += w * coef[k];
            }
        }
    }

    pub fn absorb(&mut self, entries: &[Entry<K>]) {
        for en in entries {
            let e = self.acc.entry((en.dj, en.di)).or_insert([0.0; K]);
            for k in 0..K {
                e[k] += en.c[k];
            }
        }
    }

    pub fn finish(self) -> Vec<Entry<K>> {
        self.acc
            .into_iter()
            .map(|((dj, di), c)| Entry { di, dj, c })
            .collect()
    }
}

/// Evaluates `out(i, j) = sum over lags, entries and channels of
/// c * field(i + di + sx, j + dj + sy)` with fields taken at the time
/// position of each lag. Rows are independent, so they run in parallel with
/// a fixed per-row summation order.
pub(crate) fn apply_stencils<const K: usize>(
    grid: &PlateGrid,
    lags: &[LagStencil<K>],
    positions: &[(usize, f64)],
    slot_fields: &[[&[f64]; K]],
    shift: (i32, i32),
) -> Vec<f64> {
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(nx as usize).enumerate().for_each(|(j, row)| {
        let j = j as i64;
        for (lag, &(m, w)) in lags.iter().zip(positions) {
            for (slot, tw) in [(m, 1.0 - w), (m + 1, w)] {
                if tw == 0.0 {
                    continue;
                }
                let fields = &slot_fields[slot];
                for e in &lag.entries {
                    let jj = j + e.dj as i64 + shift.1 as i64;
                    if jj < 0 || jj >= ny {
                        continue;
                    }
                    let off = e.di as i64 + shift.0 as i64;
                    let lo = (-off).max(0);
                    let hi = (nx - off).min(nx);
                    if lo >= hi {
                        continue;
                    }
                    let src = (jj * nx + lo + off) as usize;
                    let len = (hi - lo) as usize;
                    let mut c = [0.0; K];
                    for k in 0..K {
                        c[k] = tw * e.c[k];
                    }
                    let dst = &mut row[lo as usize..lo as usize + len];
                    let srcs: [&[f64]; K] = std::array::from_fn(|k| &fields[k][src..src + len]);
                    for (t, d) in dst.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for k in 0..K {
                            acc += c[k] * srcs[k][t];
                        }
                        *d += acc;
                    }
                }
            }
        }
    });
    out
}

/// Production quadrature of the delayed potential
/// `q(t) = (1/2pi) int_0^t* int_0^2pi M_theta^2 u^(x - (U + sin) s, y - s cos, t - s)`:
/// periodic trapezoid in `theta`, trapezoid in `s` with an end correction at
/// `s = 0`.
#[derive(Clone, Debug)]
pub struct DelayKernel {
    grid: PlateGrid,
    params: AeroParams,
    t_star: f64,
    lags: Vec<LagStencil<3>>,
}

impl DelayKernel {
    pub fn new(grid: &PlateGrid, params: &AeroParams) -> Result<Self> {
        params.validate()?;
        let ts = t_star(grid, params.u)?;
        let (sn, tn) = (params.s_n, params.theta_n);
        let hs = ts / sn as f64;
        // End correction (hs^2/12) f'(0+): the one-sided slope is exact when
        // taken from a lag short enough to stay inside the first cell.
        let delta = 0.25 * grid.hx().min(grid.hy()) / (1.0 + params.u);
        let corr = hs * hs / (12.0 * delta);
        let ring = |s: f64, base: f64| {
            let mut b = StencilBuilder::<3>::new();
            for i in 0..tn {
                let th = 2.0 * PI * i as f64 / tn as f64;
                let (sn_, cs) = th.sin_cos();
                let a = -(params.u + sn_) * s;
                let bb = -s * cs;
                b.add_shift(grid, a, bb, [base * sn_ * sn_, base * 2.0 * sn_ * cs, base * cs * cs]);
            }
            LagStencil {
                lag: s,
                entries: b.finish(),
            }
        };
        let mut lags = Vec::with_capacity(sn + 2);
        for j in 0..=sn {
            let s = j as f64 * hs;
            let ws = if j == 0 || j == sn { 0.5 * hs } else { hs };
            // (1/2pi) * ws * (2pi / theta_n)
            let mut base = ws / tn as f64;
            if j == 0 {
                base -= corr / tn as f64;
            }
            lags.push(ring(s, base));
            if j == 0 {
                lags.push(ring(delta, corr / tn as f64));
            }
        }
        Ok(Self {
            grid: *grid,
            params: *params,
            t_star: ts,
            lags,
        })
    }

    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }
    pub fn params(&self) -> &AeroParams {
        &self.params
    }
    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    /// Total number of stencil entries over all lags.
    pub fn entry_count(&self) -> usize {
        self.lags.iter().map(|l| l.entries.len()).sum()
    }

    /// `q` at the newest history time.
    pub fn apply(&self, hist: &DelayHistory) -> Result<ScalarField> {
        self.apply_at_offset(hist, 0.0)
    }

    /// `q` at time `t_now - offset`.
    pub fn apply_at_offset(&self, hist: &DelayHistory, offset: f64) -> Result<ScalarField> {
        self.grid.check_same(hist.grid())?;
        if hist.is_empty() {
            return Err(Error::HistoryTooShort {
                needed: 1,
                available: 0,
            });
        }
        let positions = self
            .lags
            .iter()
            .map(|l| hist.lag_position(offset + l.lag))
            .collect::<Result<Vec<_>>>()?;
        let slot_fields: Vec<[&[f64]; 3]> = hist
            .slots()
            .map(|s| [s.uxx.values(), s.uxy.values(), s.uyy.values()])
            .collect();
        let out = apply_stencils(&self.grid, &self.lags, &positions, &slot_fields, (0, 0));
        ScalarField::from_values(&self.grid, out)
    }

    /// Collapses all lags into the operator acting on a time-independent state.
    pub fn to_static(&self) -> StaticKernel {
        let mut b = StencilBuilder::<3>::new();
        for l in &self.lags {
            b.absorb(&l.entries);
        }
        StaticKernel {
            grid: self.grid,
            stencil: vec![LagStencil {
                lag: 0.0,
                entries: b.finish(),
            }],
        }
    }
}

/// The delayed potential of a frozen history `u(tau) = u`, a fixed linear
/// operator on `u`.
#[derive(Clone, Debug)]
pub struct StaticKernel {
    grid: PlateGrid,
    stencil: Vec<LagStencil<3>>,
}

impl StaticKernel {
    pub fn new(grid: &PlateGrid, params: &AeroParams) -> Result<Self> {
        Ok(DelayKernel::new(grid, params)?.to_static())
    }

    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(u.grid())?;
        let (uxx, uxy, uyy) = second_derivatives(u);
        let fields = [[uxx.values(), uxy.values(), uyy.values()]];
        let out = apply_stencils(&self.grid, &self.stencil, &[(0, 0.0)], &fields, (0, 0));
        ScalarField::from_values(&self.grid, out)
    }
}

/// Delayed potential at the newest history time.
pub fn q_potential(hist: &DelayHistory, params: &AeroParams, grid: &PlateGrid) -> Result<ScalarField> {
    DelayKernel::new(grid, params)?.apply(hist)
}
