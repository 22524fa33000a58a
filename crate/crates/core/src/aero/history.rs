use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};
use crate::grid::{second_derivatives, PlateGrid, ScalarField};

/// One stored time level of the plate.
#[derive(Clone, Debug)]
pub struct Slot {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub uxx: ScalarField,
    pub uxy: ScalarField,
    pub uyy: ScalarField,
}

impl Slot {
    pub fn new(t: f64, u: ScalarField, v: ScalarField) -> Self {
        let (uxx, uxy, uyy) = second_derivatives(&u);
        Self { t, u, v, uxx, uxy, uyy }
    }
}

/// Past displacement and velocity on a uniform time lattice, newest first.
#[derive(Clone, Debug)]
pub struct DelayHistory {
    grid: PlateGrid,
    dt: f64,
    t_star: f64,
    capacity: usize,
    slots: VecDeque<Slot>,
}

impl DelayHistory {
    pub fn new(grid: &PlateGrid, dt: f64, t_star: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t_star > 0.0 && t_star.is_finite()) {
            return Err(invalid("t_star", format!("must be positive, got {t_star}")));
        }
        let capacity = (t_star / dt).ceil() as usize + 2;
        Ok(Self {
            grid: *grid,
            dt,
            t_star,
            capacity,
            slots: VecDeque::with_capacity(capacity),
        })
    }

    /// Full window ending at `t_now`, slot `m` at `t_now - m dt` filled by
    /// `f(tau) = (u, v)`.
    pub fn from_fn(
        grid: &PlateGrid,
        dt: f64,
        t_star: f64,
        t_now: f64,
        mut f: impl FnMut(f64) -> (ScalarField, ScalarField),
    ) -> Result<Self> {
        let mut h = Self::new(grid, dt, t_star)?;
        for m in (0..h.capacity).rev() {
            let tau = t_now - m as f64 * dt;
            let (u, v) = f(tau);
            h.push_unchecked(Slot::new(tau, u, v))?;
        }
        Ok(h)
    }

    /// Every slot holds the same `u0` with zero velocity.
    pub fn frozen(grid: &PlateGrid, dt: f64, t_star: f64, t_now: f64, u0: &ScalarField) -> Result<Self> {
        let template = Slot::new(t_now, u0.clone(), ScalarField::zeros(grid));
        let mut h = Self::new(grid, dt, t_star)?;
        grid.check_same(u0.grid())?;
        for m in (0..h.capacity).rev() {
            let mut s = template.clone();
            s.t = t_now - m as f64 * dt;
            h.slots.push_front(s);
        }
        Ok(h)
    }

    fn push_unchecked(&mut self, slot: Slot) -> Result<()> {
        self.grid.check_same(slot.u.grid())?;
        self.grid.check_same(slot.v.grid())?;
        self.slots.push_front(slot);
        while self.slots.len() > self.capacity {
            self.slots.pop_back();
        }
        Ok(())
    }

    /// Appends the state at `t`, which must be exactly one step after the
    /// newest slot (relative tolerance 1e-9 on the spacing).
    pub fn push(&mut self, t: f64, u: ScalarField, v: ScalarField) -> Result<()> {
        if let Some(last) = self.slots.front() {
            let got = t - last.t;
            if (got - self.dt).abs() > 1e-9 * self.dt + 1e-14 * t.abs() {
                return Err(Error::HistorySpacing {
                    expected: self.dt,
                    got,
                });
            }
        }
        self.push_unchecked(Slot::new(t, u, v))
    }

    /// Overwrites the newest slot, keeping its time.
    pub fn replace_newest(&mut self, u: ScalarField, v: ScalarField) -> Result<()> {
        let Some(last) = self.slots.front_mut() else {
            return Err(Error::HistoryTooShort { needed: 1, available: 0 });
        };
        self.grid.check_same(u.grid())?;
        self.grid.check_same(v.grid())?;
        *last = Slot::new(last.t, u, v);
        Ok(())
    }

    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn t_star(&self) -> f64 {
        self.t_star
    }
    pub fn capacity(&self) -> usize {
        self.capacity
    }
    pub fn len(&self) -> usize {
        self.slots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn t_now(&self) -> Option<f64> {
        self.slots.front().map(|s| s.t)
    }

    /// Slot `m` steps in the past (`0` is the newest).
    pub fn slot(&self, m: usize) -> &Slot {
        &self.slots[m]
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter()
    }

    /// True when the stored window covers `[t_now - t*, t_now]`.
    pub fn is_complete(&self) -> bool {
        !self.slots.is_empty() && (self.slots.len() - 1) as f64 * self.dt >= self.t_star * (1.0 - 1e-12)
    }

    /// Slot pair and weight for a lag: the value at `t_now - lag` is
    /// `(1 - w) * slot[m] + w * slot[m + 1]`.
    pub fn lag_position(&self, lag: f64) -> Result<(usize, f64)> {
        lag_position(self.dt, self.slots.len(), lag)
    }

    /// Linear-in-time displacement at `t_now - lag`.
    pub fn displacement_at_lag(&self, lag: f64) -> Result<ScalarField> {
        let (m, w) = self.lag_position(lag)?;
        if w == 0.0 {
            return Ok(self.slots[m].u.clone());
        }
        Ok(ScalarField::lincomb(1.0 - w, &self.slots[m].u, w, &self.slots[m + 1].u))
    }

    /// Shifts every slot time by `delta`.
    pub fn shift_clock(&mut self, delta: f64) {
        for s in &mut self.slots {
            s.t += delta;
        }
    }
}

pub(crate) fn lag_position(dt: f64, len: usize, lag: f64) -> Result<(usize, f64)> {
    if !(lag >= 0.0) {
        return Err(invalid("lag", format!("must be nonnegative, got {lag}")));
    }
    let p = lag / dt;
    let mut m = p.floor() as usize;
    let mut w = (p - m as f64).clamp(0.0, 1.0);
    if w == 1.0 {
        m += 1;
        w = 0.0;
    }
    let needed = if w > 0.0 { m + 2 } else { m + 1 };
    if needed > len {
        return Err(Error::HistoryTooShort { needed, available: len });
    }
    Ok((m, w))
}
