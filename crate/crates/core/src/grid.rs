//! Uniform discretization of the rectangular plate and the clamped
//! finite-difference operators built on it.
//!
//! Nodes are strictly interior: node `(i, j)` sits at
//! `(x0 + (i + 1) hx, y0 + (j + 1) hy)` for `i < nx`, `j < ny`. The boundary
//! ring (`i = -1, nx` or `j = -1, ny` in interior indexing) carries the clamped
//! value `u = 0`, and the ghost layer beyond it mirrors the first interior
//! line (`u(-1) = u(1)` in ring-based indexing), which encodes `du/dn = 0`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest admissible interior node count per direction.
pub const MIN_NODES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateGrid {
    x0: f64,
    y0: f64,
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
}

impl PlateGrid {
    pub fn new(x0: f64, y0: f64, lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(invalid(
                "grid",
                format!("need at least {MIN_NODES} interior nodes per direction, got {nx}x{ny}"),
            ));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(invalid("grid", format!("extents must be positive, got {lx}x{ly}")));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(invalid("grid", "origin must be finite"));
        }
        Ok(Self { x0, y0, lx, ly, nx, ny })
    }

    /// `[0, 1]^2` with `n x n` interior nodes.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(0.0, 0.0, 1.0, 1.0, n, n)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.lx / (self.nx + 1) as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / (self.ny + 1) as f64
    }
    /// Quadrature weight of one node.
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn diameter(&self) -> f64 {
        self.lx.hypot(self.ly)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical coordinates of interior node `(i, j)`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i + 1) as f64 * self.hx(),
            self.y0 + (j + 1) as f64 * self.hy(),
        )
    }

    /// Closed-rectangle membership.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x0 + self.lx && y >= self.y0 && y <= self.y0 + self.ly
    }

    pub fn check_same(&self, other: &PlateGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Real values on the interior nodes of a [`PlateGrid`], row-major in `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: PlateGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &PlateGrid) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &PlateGrid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: &PlateGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.node(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid: *grid, values }
    }

    pub fn from_values(grid: &PlateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.nx,
                grid.ny,
                values.len()
            )));
        }
        Ok(Self { grid: *grid, values })
    }

    pub fn grid(&self) -> &PlateGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Value at interior index `(i, j)`, zero anywhere off the interior
    /// (boundary ring and beyond).
    #[inline]
    pub fn lattice(&self, i: isize, j: isize) -> f64 {
        if i < 0 || j < 0 || i >= self.grid.nx as isize || j >= self.grid.ny as isize {
            0.0
        } else {
            self.values[j as usize * self.grid.nx + i as usize]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `a * x + b * y`
    pub fn lincomb(a: f64, x: &ScalarField, b: f64, y: &ScalarField) -> ScalarField {
        debug_assert_eq!(x.grid, y.grid);
        ScalarField {
            grid: x.grid,
            values: x.values.iter().zip(&y.values).map(|(p, q)| a * p + b * q).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mirrored_x(&self) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::zeros(&g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.values[g.idx(i, j)] = self.get(g.nx - 1 - i, j);
            }
        }
        out
    }

    pub fn mirrored_y(&self) -> ScalarField {
        let g = self.grid;
        let mut out = ScalarField::zeros(&g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                out.values[g.idx(i, j)] = self.get(i, g.ny - 1 - j);
            }
        }
        out
    }
}

impl<'a> Add<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &'a ScalarField) -> ScalarField {
        ScalarField::lincomb(1.0, self, 1.0, rhs)
    }
}

impl<'a> Sub<&'a ScalarField> for &'a ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &'a ScalarField) -> ScalarField {
        ScalarField::lincomb(1.0, self, -1.0, rhs)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        self.scaled(rhs)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.scaled(-1.0)
    }
}

/// First and second centered differences of a clamped field.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub fx: ScalarField,
    pub fy: ScalarField,
    pub fxx: ScalarField,
    pub fxy: ScalarField,
    pub fyy: ScalarField,
}

/// Centered 5-point Laplacian with the clamped boundary ring `u = 0`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let (cx, cy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut out = ScalarField::zeros(&g);
    for j in 0..ny {
        for i in 0..nx {
            let c = f.lattice(i, j);
            let v = cx * (f.lattice(i + 1, j) - 2.0 * c + f.lattice(i - 1, j))
                + cy * (f.lattice(i, j + 1) - 2.0 * c + f.lattice(i, j - 1));
            out.values[(j * nx + i) as usize] = v;
        }
    }
    out
}

/// Clamped biharmonic operator (13-point stencil).
///
/// Equal to the 5-point Laplacian applied to the clamped Laplacian, whose
/// boundary-ring values come from the ghost reflection: `w_ring = 2 u_1 / h^2`.
/// On the interior this is `L^2 + D` with `D = 2/hx^4` on the first and last
/// columns and `2/hy^4` on the first and last rows.
pub fn biharmonic_clamped(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let mut out = laplacian(&laplacian(f));
    let (dx, dy) = (2.0 / g.hx().powi(4), 2.0 / g.hy().powi(4));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut d = 0.0;
            if i == 0 || i == g.nx - 1 {
                d += dx;
            }
            if j == 0 || j == g.ny - 1 {
                d += dy;
            }
            if d != 0.0 {
                let k = g.idx(i, j);
                out.values[k] += d * f.values[k];
            }
        }
    }
    out
}

/// Centered x-difference with the zero boundary ring.
pub fn dx(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let c = 0.5 / g.hx();
    let mut out = ScalarField::zeros(&g);
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            out.values[j as usize * g.nx + i as usize] = c * (f.lattice(i + 1, j) - f.lattice(i - 1, j));
        }
    }
    out
}

/// Centered y-difference with the zero boundary ring.
pub fn dy(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let c = 0.5 / g.hy();
    let mut out = ScalarField::zeros(&g);
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            out.values[j as usize * g.nx + i as usize] = c * (f.lattice(i, j + 1) - f.lattice(i, j - 1));
        }
    }
    out
}

/// Second derivatives only: `(fxx, fxy, fyy)`.
pub fn second_derivatives(f: &ScalarField) -> (ScalarField, ScalarField, ScalarField) {
    let g = *f.grid();
    let (cxx, cyy) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let cxy = 0.25 / (g.hx() * g.hy());
    let mut fxx = ScalarField::zeros(&g);
    let mut fxy = ScalarField::zeros(&g);
    let mut fyy = ScalarField::zeros(&g);
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let k = j as usize * g.nx + i as usize;
            let c = f.lattice(i, j);
            fxx.values[k] = cxx * (f.lattice(i + 1, j) - 2.0 * c + f.lattice(i - 1, j));
            fyy.values[k] = cyy * (f.lattice(i, j + 1) - 2.0 * c + f.lattice(i, j - 1));
            fxy.values[k] = cxy
                * (f.lattice(i + 1, j + 1) - f.lattice(i + 1, j - 1) - f.lattice(i - 1, j + 1)
                    + f.lattice(i - 1, j - 1));
        }
    }
    (fxx, fxy, fyy)
}

pub fn derivatives(f: &ScalarField) -> Derivatives {
    let (fxx, fxy, fyy) = second_derivatives(f);
    Derivatives {
        fx: dx(f),
        fy: dy(f),
        fxx,
        fxy,
        fyy,
    }
}

/// Bilinear interpolation of the zero extension of `f`.
///
/// Uses the lattice including the boundary ring (value 0); returns exactly 0
/// outside the closed plate rectangle.
pub fn eval_extended(f: &ScalarField, x: f64, y: f64) -> f64 {
    let g = f.grid();
    let xi = (x - g.x0) / g.hx();
    let eta = (y - g.y0) / g.hy();
    let (mx, my) = ((g.nx + 1) as f64, (g.ny + 1) as f64);
    if !(xi >= 0.0 && xi <= mx && eta >= 0.0 && eta <= my) {
        return 0.0;
    }
    // ring-based lattice index: 0 and n+1 are the boundary ring
    let a = (xi.floor() as isize).min(g.nx as isize);
    let b = (eta.floor() as isize).min(g.ny as isize);
    let (tx, ty) = (xi - a as f64, eta - b as f64);
    let v00 = f.lattice(a - 1, b - 1);
    let v10 = f.lattice(a, b - 1);
    let v01 = f.lattice(a - 1, b);
    let v11 = f.lattice(a, b);
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}

/// Midpoint-rule `L2(Omega)` inner product.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    Ok(inner_unchecked(f, g))
}

#[inline]
pub(crate) fn inner_unchecked(f: &ScalarField, g: &ScalarField) -> f64 {
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    s * f.grid.cell_area()
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    inner_unchecked(f, f).sqrt()
}

/// `||laplacian(f)||` on the interior nodes.
pub fn norm_h2(f: &ScalarField) -> f64 {
    norm_l2(&laplacian(f))
}

/// Clamped bending norm `<A f, f>` with `A` the clamped biharmonic operator.
pub fn bending_norm_sq(f: &ScalarField) -> f64 {
    inner_unchecked(&biharmonic_clamped(f), f)
}

/// `||Lap f||^2` by the trapezoid rule over interior nodes plus the boundary
/// ring, whose Laplacian values follow from the ghost reflection.
///
/// Equals [`bending_norm_sq`] in exact arithmetic; the two are computed along
/// independent paths.
pub fn clamped_laplacian_norm_sq(f: &ScalarField) -> f64 {
    let g = *f.grid();
    let lap = laplacian(f);
    let interior: f64 = lap.values.iter().map(|v| v * v).sum();
    let (hx2, hy2) = (g.hx() * g.hx(), g.hy() * g.hy());
    let mut ring = 0.0;
    for j in 0..g.ny {
        let (wl, wr) = (2.0 * f.get(0, j) / hx2, 2.0 * f.get(g.nx - 1, j) / hx2);
        ring += wl * wl + wr * wr;
    }
    for i in 0..g.nx {
        let (wb, wt) = (2.0 * f.get(i, 0) / hy2, 2.0 * f.get(i, g.ny - 1) / hy2);
        ring += wb * wb + wt * wt;
    }
    (interior + 0.5 * ring) * g.cell_area()
}

/// Smooth clamped test mode `sin(m pi xi) sin(n pi eta) sin(pi xi) sin(pi eta)`
/// in normalized coordinates; vanishes with its normal derivative on the edge.
pub fn clamped_mode(grid: &PlateGrid, m: u32, n: u32) -> ScalarField {
    let g = *grid;
    ScalarField::from_fn(grid, |x, y| {
        let xi = (x - g.x0) / g.lx;
        let eta = (y - g.y0) / g.ly;
        let pi = std::f64::consts::PI;
        (m as f64 * pi * xi).sin()
            * (n as f64 * pi * eta).sin()
            * (pi * xi).sin()
            * (pi * eta).sin()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> PlateGrid {
        PlateGrid::unit_square(n).unwrap()
    }

    #[test]
    fn rejects_small_grids() {
        assert!(PlateGrid::unit_square(7).is_err());
        assert!(PlateGrid::new(0.0, 0.0, -1.0, 1.0, 10, 10).is_err());
    }

    #[test]
    fn laplacian_of_zero_is_zero() {
        let g = grid(10);
        assert_eq!(laplacian(&ScalarField::zeros(&g)).max_abs(), 0.0);
        assert_eq!(biharmonic_clamped(&ScalarField::zeros(&g)).max_abs(), 0.0);
    }

    #[test]
    fn laplacian_spike_stencil() {
        let g = PlateGrid::new(0.0, 0.0, 1.0, 2.0, 10, 12).unwrap();
        let mut f = ScalarField::zeros(&g);
        f.values_mut()[g.idx(4, 5)] = 1.0;
        let l = laplacian(&f);
        let (cx, cy) = (1.0 / g.hx().powi(2), 1.0 / g.hy().powi(2));
        assert!((l.get(4, 5) - (-2.0 * cx - 2.0 * cy)).abs() < 1e-9);
        assert!((l.get(3, 5) - cx).abs() < 1e-9);
        assert!((l.get(5, 5) - cx).abs() < 1e-9);
        assert!((l.get(4, 4) - cy).abs() < 1e-9);
        assert!((l.get(4, 6) - cy).abs() < 1e-9);
        assert_eq!(l.get(5, 6), 0.0);
    }

    fn sine_error(n: usize) -> f64 {
        let g = grid(n);
        let f = ScalarField::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let exact = f.scaled(-2.0 * PI * PI);
        (&laplacian(&f) - &exact).max_abs()
    }

    #[test]
    fn laplacian_second_order() {
        let (e1, e2) = (sine_error(15), sine_error(31));
        let ratio = e1 / e2;
        assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
    }

    #[test]
    fn cross_derivative_of_xy() {
        let g = grid(20);
        let f = ScalarField::from_fn(&g, |x, y| x * y);
        let d = derivatives(&f);
        for j in 1..g.ny() - 1 {
            for i in 1..g.nx() - 1 {
                assert!((d.fxy.get(i, j) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fx_antisymmetric_for_even_field() {
        let g = grid(17);
        let f = ScalarField::from_fn(&g, |x, y| ((x - 0.5) * 3.0).cos() * y * (1.0 - y));
        let fx = dx(&f);
        let mirrored = fx.mirrored_x();
        for (a, b) in fx.values().iter().zip(mirrored.values()) {
            assert!((a + b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn eval_extended_cases() {
        let g = grid(9);
        let f = ScalarField::from_fn(&g, |x, y| 1.0 + x + 2.0 * y * y);
        assert_eq!(eval_extended(&f, -0.1, 0.5), 0.0);
        assert_eq!(eval_extended(&f, 0.5, 1.2), 0.0);
        let (x, y) = g.node(3, 4);
        assert!((eval_extended(&f, x, y) - f.get(3, 4)).abs() < 1e-14);
        let (xc, yc) = (x + 0.5 * g.hx(), y + 0.5 * g.hy());
        let avg = 0.25 * (f.get(3, 4) + f.get(4, 4) + f.get(3, 5) + f.get(4, 5));
        assert!((eval_extended(&f, xc, yc) - avg).abs() < 1e-14);
        // boundary ring is zero
        assert_eq!(eval_extended(&f, 0.0, 0.5), 0.0);
        assert_eq!(eval_extended(&f, 1.0, 1.0), 0.0);
    }

    #[test]
    fn constant_norm_converges_to_area() {
        for n in [20, 80] {
            let g = PlateGrid::new(0.0, 0.0, 2.0, 1.5, n, n).unwrap();
            let one = ScalarField::constant(&g, 1.0);
            let area = norm_l2(&one).powi(2);
            let expect = 3.0 * (n as f64 / (n + 1) as f64).powi(2);
            assert!((area - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bending_norm_two_routes_agree() {
        let g = PlateGrid::new(0.0, 0.0, 1.0, 1.3, 12, 14).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() + x * y * y - 0.3 * y);
        let a = bending_norm_sq(&f);
        let b = clamped_laplacian_norm_sq(&f);
        assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn inner_rejects_mismatch() {
        let a = ScalarField::zeros(&grid(9));
        let b = ScalarField::zeros(&grid(10));
        assert!(inner(&a, &b).is_err());
    }
}
