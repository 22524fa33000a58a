//! Banded SPD factorization and a restarted GMRES for the plate operators.

use crate::error::{Error, Result};
use crate::grid::PlateGrid;

/// Symmetric banded matrix, lower band stored row by row:
/// `band[r * (bw + 1) + d] = A[r][r - d]`.
#[derive(Clone, Debug)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(r, c)` for `|r - c| <= bw`, zero otherwise.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.bw {
            0.0
        } else {
            self.band[r * (self.bw + 1) + (r - c)]
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r >= c && r - c <= self.bw);
        self.band[r * (self.bw + 1) + (r - c)] += v;
    }

    /// Matrix of the clamped biharmonic operator on `grid`, scaled by `a` and
    /// shifted by `b`: `a * A + b * I`.
    pub fn clamped_biharmonic(grid: &PlateGrid, a: f64, b: f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let n = nx * ny;
        let (cx, cy) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
        // rows of the 5-point Laplacian with the zero ring
        let lap_row = |i: usize, j: usize| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
            row.push((j * nx + i, -2.0 * cx - 2.0 * cy));
            if i > 0 {
                row.push((j * nx + i - 1, cx));
            }
            if i + 1 < nx {
                row.push((j * nx + i + 1, cx));
            }
            if j > 0 {
                row.push(((j - 1) * nx + i, cy));
            }
            if j + 1 < ny {
                row.push(((j + 1) * nx + i, cy));
            }
            row
        };
        let mut m = Self::zeros(n, 2 * nx);
        let (dx, dy) = (2.0 / grid.hx().powi(4), 2.0 / grid.hy().powi(4));
        for j in 0..ny {
            for i in 0..nx {
                let r = j * nx + i;
                // (L^2)[r, c] = sum_k L[r, k] L[k, c]; L is symmetric
                for (k, lrk) in lap_row(i, j) {
                    let (ki, kj) = (k % nx, k / nx);
                    for (c, lkc) in lap_row(ki, kj) {
                        if c <= r {
                            m.add(r, c, a * lrk * lkc);
                        }
                    }
                }
                let mut d = b;
                if i == 0 || i == nx - 1 {
                    d += a * dx;
                }
                if j == 0 || j == ny - 1 {
                    d += a * dy;
                }
                m.add(r, r, d);
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..n {
            let row = &self.band[r * (bw + 1)..(r + 1) * (bw + 1)];
            y[r] += row[0] * x[r];
            for d in 1..=bw.min(r) {
                let c = r - d;
                y[r] += row[d] * x[c];
                y[c] += row[d] * x[r];
            }
        }
    }
}

/// Cholesky factor `A = L L^T` of a [`BandedSym`], same band layout.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &BandedSym) -> Result<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.band.clone();
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                // L[r][c] = (A[r][c] - sum_{k<c} L[r][k] L[c][k]) / L[c][c]
                let klo = lo.max(c.saturating_sub(bw));
                let mut s = l[r * w + (r - c)];
                for k in klo..c {
                    s -= l[r * w + (r - k)] * l[c * w + (c - k)];
                }
                if c == r {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: r, pivot: s });
                    }
                    l[r * w] = s.sqrt();
                } else {
                    l[r * w + (r - c)] = s / l[c * w];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for r in 0..n {
            let mut s = x[r];
            for c in r.saturating_sub(bw)..r {
                s -= self.l[r * w + (r - c)] * x[c];
            }
            x[r] = s / self.l[r * w];
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..(r + bw + 1).min(n) {
                s -= self.l[c * w + (c - r)] * x[c];
            }
            x[r] = s / self.l[r * w];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub rtol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            restart: 60,
            max_iter: 600,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x`.
///
/// `apply(v, out)` computes `A v`, `precond(v, out)` computes `M^{-1} v`.
/// The residual is measured unpreconditioned, so `relative_residual` is
/// `||b - A x|| / ||b||`.
pub fn gmres<A, P>(apply: A, precond: P, b: &[f64], x: &mut [f64], opts: GmresOptions) -> Result<SolveStats>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut rel;
    loop {
        apply(x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.rtol {
            break;
        }
        if total >= opts.max_iter {
            return Err(Error::SolverDivergence {
                iterations: total,
                residual: rel,
            });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            let mut w = vec![0.0; n];
            apply(&z, &mut w);
            // modified Gram-Schmidt, twice for robustness at tight tolerances
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let hij = dot(&w, q);
                    h[i][k] += hij;
                    for (wv, qv) in w.iter_mut().zip(q) {
                        *wv -= hij * qv;
                    }
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            if d == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if (g[k + 1].abs() / bnorm) <= 0.5 * opts.rtol || wn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut dx = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (d, q) in dx.iter_mut().zip(&basis[j]) {
                *d += yj * q;
            }
        }
        precond(&dx, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
        if k_used == 0 {
            // stagnation: nothing more to gain
            apply(x, &mut tmp);
            let res: Vec<f64> = b.iter().zip(&tmp).map(|(p, q)| p - q).collect();
            rel = norm(&res) / bnorm;
            if rel <= opts.rtol {
                break;
            }
            return Err(Error::SolverDivergence {
                iterations: total,
                residual: rel,
            });
        }
    }
    Ok(SolveStats {
        iterations: total,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{biharmonic_clamped, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assembled_matrix_matches_stencil() {
        let g = PlateGrid::new(0.0, 0.0, 1.0, 1.4, 9, 11).unwrap();
        let m = BandedSym::clamped_biharmonic(&g, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; g.len()];
        m.matvec(&x, &mut y);
        let f = ScalarField::from_values(&g, x).unwrap();
        let z = biharmonic_clamped(&f);
        for (a, b) in y.iter().zip(z.values()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn cholesky_solves() {
        let g = PlateGrid::unit_square(12).unwrap();
        let m = BandedSym::clamped_biharmonic(&g, 1.0, 3.0);
        let ch = BandedCholesky::factor(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = ch.solve(&b);
        let mut ax = vec![0.0; g.len()];
        m.matvec(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-8 * norm(&b), "{err}");
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = BandedSym::zeros(3, 1);
        m.add(0, 0, 1.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 1.0);
        m.add(2, 2, 1.0);
        assert!(matches!(
            BandedCholesky::factor(&m),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn gmres_nonsymmetric() {
        let n = 50;
        // tridiagonal convection-diffusion
        let apply = |v: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = 4.0 * v[i] - 1.5 * l - 0.5 * r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = gmres(apply, |v, o| o.copy_from_slice(v), &b, &mut x, GmresOptions::default()).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
