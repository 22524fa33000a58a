use crate::error::{invalid, Result};
use crate::grid::PlateGrid;

/// Delay horizon of the plate rectangle for flow speed `u`.
///
/// Footprints move with velocity `-(u + sin t, cos t)`; the longest time any
/// of them can stay inside the rectangle is reached along a diagonal, which
/// gives `d^2 / (sqrt(d^2 - u^2 Ly^2) - u Lx)` with `d` the diagonal. This is
/// at most `d / (1 - u)` and equals `d` at `u = 0`.
pub fn t_star(grid: &PlateGrid, u: f64) -> Result<f64> {
    if !(u >= 0.0 && u < 1.0) {
        return Err(invalid(
            "U",
            format!("delay horizon needs 0 <= U < 1 (subsonic only), got {u}"),
        ));
    }
    let (lx, ly) = (grid.lx(), grid.ly());
    let d2 = lx * lx + ly * ly;
    Ok(d2 / ((d2 - u * u * ly * ly).sqrt() - u * lx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_flow_gives_diameter() {
        let g = PlateGrid::new(0.0, 0.0, 1.0, 2.0, 8, 8).unwrap();
        assert!((t_star(&g, 0.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn increasing_and_bounded() {
        let g = PlateGrid::unit_square(8).unwrap();
        let mut prev = 0.0;
        for k in 0..20 {
            let u = k as f64 * 0.049;
            let t = t_star(&g, u).unwrap();
            assert!(t > prev);
            assert!(t <= g.diameter() / (1.0 - u) + 1e-12);
            prev = t;
        }
    }

    #[test]
    fn rejects_sonic_and_negative() {
        let g = PlateGrid::unit_square(8).unwrap();
        assert!(t_star(&g, 1.0).is_err());
        assert!(t_star(&g, -0.1).is_err());
    }
}
