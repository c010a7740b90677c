//! Fast sweeping solver for the point-source eikonal equation `|grad u| = m`
//! on the Cartesian embedding of the unit disk.
//!
//! The disk is embedded in `[-1, 1]^2`. Nodes farther than [`mask_radius`]
//! from the origin carry a large exterior slowness so that exterior paths never
//! win. The mask radius leaves a one-cell collar of interior slowness outside
//! the circle: every bilinear stencil touching the unit circle then consists of
//! nodes holding physical traveltimes, which is what receiver interpolation
//! needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CartesianField, CartesianGrid, PlanarField};
use crate::scalar::Real;

/// Default exterior slowness, for a background of order one.
pub const DEFAULT_OUTSIDE_SLOWNESS: f64 = 100.0;

/// Radius beyond which nodes are exterior: `1 + sqrt(2) * spacing`.
pub fn mask_radius<T: Real>(grid: CartesianGrid) -> T {
    T::one() + T::SQRT_2() * grid.spacing::<T>()
}

fn is_exterior<T: Real>(grid: CartesianGrid, ix: usize, iy: usize) -> bool {
    let (x, y) = (grid.coord::<T>(ix), grid.coord::<T>(iy));
    let r = mask_radius::<T>(grid);
    x * x + y * y > r * r
}

/// Positive slowness on a Cartesian grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SlownessField<T> {
    pub field: CartesianField<T>,
}

impl<T: Real> SlownessField<T> {
    pub fn new(field: CartesianField<T>) -> Result<Self> {
        if let Some(v) = field.values.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid(format!("slowness must be positive and finite, found {v}")));
        }
        Ok(Self { field })
    }

    pub fn grid(&self) -> CartesianGrid {
        self.field.grid
    }

    /// Samples `m` at every node rotated by `rotation` radians into world
    /// coordinates, then applies the exterior mask.
    ///
    /// With `rotation = s` the node `(x, y)` reads `m(R_s (x, y))`, i.e. the
    /// grid is a frame in which world angle `s` appears at angle zero.
    pub fn rasterize(
        grid: CartesianGrid,
        m: &dyn PlanarField<T>,
        rotation: T,
        outside_slowness: T,
    ) -> Result<Self> {
        let (sn, cs) = rotation.sin_cos();
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        let mut max_inside = T::zero();
        for iy in 0..n {
            let y = grid.coord::<T>(iy);
            for ix in 0..n {
                if is_exterior::<T>(grid, ix, iy) {
                    values.push(outside_slowness);
                } else {
                    let x = grid.coord::<T>(ix);
                    let v = m.value_at(cs * x - sn * y, sn * x + cs * y);
                    max_inside = max_inside.max(v);
                    values.push(v);
                }
            }
        }
        check_outside(outside_slowness, max_inside)?;
        Self::new(CartesianField { grid, values })
    }

    /// Largest slowness over interior nodes.
    pub fn max_inside(&self) -> T {
        let g = self.grid();
        let n = g.n();
        let mut m = T::zero();
        for iy in 0..n {
            for ix in 0..n {
                if !is_exterior::<T>(g, ix, iy) {
                    m = m.max(self.field.at(ix, iy));
                }
            }
        }
        m
    }
}

fn check_outside<T: Real>(outside: T, max_inside: T) -> Result<()> {
    if !(outside >= T::lit(10.0) * max_inside) {
        return Err(Error::invalid(format!(
            "outside slowness {outside} must be at least 10x the largest interior slowness {max_inside}"
        )));
    }
    Ok(())
}

/// Sets every exterior node to `outside_slowness`; interior values are untouched.
pub fn outside_mask_apply<T: Real>(
    m: &SlownessField<T>,
    outside_slowness: T,
) -> Result<SlownessField<T>> {
    check_outside(outside_slowness, m.max_inside())?;
    let g = m.grid();
    let mut out = m.clone();
    for iy in 0..g.n() {
        for ix in 0..g.n() {
            if is_exterior::<T>(g, ix, iy) {
                out.field.values[g.index(ix, iy)] = outside_slowness;
            }
        }
    }
    Ok(out)
}

/// One of the four Gauss-Seidel orderings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub x_ascending: bool,
    pub y_ascending: bool,
}

impl Ordering {
    pub const fn new(x_ascending: bool, y_ascending: bool) -> Self {
        Self {
            x_ascending,
            y_ascending,
        }
    }
}

pub const DEFAULT_ORDERINGS: [Ordering; 4] = [
    Ordering::new(true, true),
    Ordering::new(false, true),
    Ordering::new(false, false),
    Ordering::new(true, false),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig<T> {
    pub tol: T,
    pub max_sweeps: usize,
    pub orderings: [Ordering; 4],
}

impl<T: Real> Default for SweepConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_sweeps: 1000,
            orderings: DEFAULT_ORDERINGS,
        }
    }
}

/// Converged traveltimes from one source.
#[derive(Clone, Debug)]
pub struct TraveltimeField<T> {
    pub field: CartesianField<T>,
    pub source_angle: T,
    /// Sweeps performed (each ordering counts once).
    pub sweeps: usize,
    /// Largest nodal change per cycle of four sweeps.
    pub residuals: Vec<T>,
}

impl<T: Real> TraveltimeField<T> {
    pub fn sample(&self, x: T, y: T) -> Result<T> {
        self.field.sample(x, y)
    }
}

/// Godunov upwind update for a node with slowness times spacing `f` given the
/// smallest horizontal and vertical neighbour values `a` and `b`.
#[inline]
pub fn godunov_update<T: Real>(a: T, b: T, f: T) -> T {
    let diff = (a - b).abs();
    if diff >= f {
        a.min(b) + f
    } else {
        (a + b + (T::lit(2.0) * f * f - diff * diff).sqrt()) * T::lit(0.5)
    }
}

/// Solves `|grad u| = m`, `u(x_s) = 0` with `x_s = (cos a, sin a)`.
///
/// The four nodes of the cell containing the source are fixed to
/// `m(x_s) |x - x_s|` and never updated. All other nodes start at infinity and
/// are lowered by Godunov updates over alternating sweep orderings until a full
/// cycle changes no node by more than `cfg.tol`.
pub fn sweep_solve<T: Real>(
    m: &SlownessField<T>,
    source_angle: T,
    cfg: &SweepConfig<T>,
) -> Result<TraveltimeField<T>> {
    if !(cfg.tol > T::zero()) {
        return Err(Error::invalid(format!("sweep tolerance must be positive, got {}", cfg.tol)));
    }
    let grid = m.grid();
    let n = grid.n();
    let h = grid.spacing::<T>();
    let slow = &m.field.values;

    let (sy, sx) = source_angle.sin_cos();
    let (ix0, iy0, _, _) = grid.locate(sx, sy)?;
    let m_source = m.field.sample(sx, sy)?;

    let mut u = vec![T::infinity(); grid.len()];
    let mut fixed = vec![false; grid.len()];
    for (ix, iy) in [(ix0, iy0), (ix0 + 1, iy0), (ix0, iy0 + 1), (ix0 + 1, iy0 + 1)] {
        let dx = grid.coord::<T>(ix) - sx;
        let dy = grid.coord::<T>(iy) - sy;
        let idx = grid.index(ix, iy);
        u[idx] = m_source * (dx * dx + dy * dy).sqrt();
        fixed[idx] = true;
    }

    let mut sweeps = 0;
    let mut residuals = Vec::new();
    loop {
        let mut cycle_change = T::zero();
        for ord in cfg.orderings {
            let change = sweep(&mut u, &fixed, slow, n, h, ord);
            cycle_change = cycle_change.max(change);
            sweeps += 1;
        }
        residuals.push(cycle_change);
        if cycle_change < cfg.tol {
            break;
        }
        if sweeps >= cfg.max_sweeps {
            return Err(Error::NotConverged {
                sweeps,
                residual: cycle_change.as_f64(),
            });
        }
    }

    Ok(TraveltimeField {
        field: CartesianField { grid, values: u },
        source_angle,
        sweeps,
        residuals,
    })
}

fn sweep<T: Real>(
    u: &mut [T],
    fixed: &[bool],
    slow: &[T],
    n: usize,
    h: T,
    ord: Ordering,
) -> T {
    let mut max_change = T::zero();
    for jj in 0..n {
        let iy = if ord.y_ascending { jj } else { n - 1 - jj };
        for ii in 0..n {
            let ix = if ord.x_ascending { ii } else { n - 1 - ii };
            let idx = iy * n + ix;
            if fixed[idx] {
                continue;
            }
            let west = if ix > 0 { u[idx - 1] } else { T::infinity() };
            let east = if ix + 1 < n { u[idx + 1] } else { T::infinity() };
            let south = if iy > 0 { u[idx - n] } else { T::infinity() };
            let north = if iy + 1 < n { u[idx + n] } else { T::infinity() };
            let a = west.min(east);
            let b = south.min(north);
            if a.is_infinite() && b.is_infinite() {
                continue;
            }
            let cand = godunov_update(a, b, slow[idx] * h);
            let old = u[idx];
            if cand < old {
                u[idx] = cand;
                max_change = max_change.max(old - cand);
            }
        }
    }
    max_change
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Constant;

    fn uniform(n: usize, value: f64) -> SlownessField<f64> {
        let g = CartesianGrid::new(n).unwrap();
        SlownessField::rasterize(g, &Constant(value), 0.0, DEFAULT_OUTSIDE_SLOWNESS).unwrap()
    }

    fn max_disk_error(u: &TraveltimeField<f64>, scale: f64, angle: f64) -> f64 {
        let g = u.field.grid;
        let (sx, sy) = (angle.cos(), angle.sin());
        let mut err: f64 = 0.0;
        for iy in 0..g.n() {
            for ix in 0..g.n() {
                let (x, y) = (g.coord::<f64>(ix), g.coord::<f64>(iy));
                if x * x + y * y < 1.0 {
                    let exact = scale * ((x - sx).powi(2) + (y - sy).powi(2)).sqrt();
                    err = err.max((u.field.at(ix, iy) - exact).abs());
                }
            }
        }
        err
    }

    #[test]
    fn godunov_one_and_two_sided() {
        assert_eq!(godunov_update(1.0, 5.0, 0.5), 1.5);
        let v = godunov_update(1.0, 1.0, 1.0);
        assert!((v - (1.0 + 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(godunov_update(f64::INFINITY, 2.0, 0.25), 2.25);
    }

    #[test]
    fn constant_slowness_gives_distance() {
        let m = uniform(160, 1.0);
        let u = sweep_solve(&m, 0.0, &SweepConfig::default()).unwrap();
        let h = m.grid().spacing::<f64>();
        let err = max_disk_error(&u, 1.0, 0.0);
        assert!(err <= 3.0 * h, "error {err} vs 3h {}", 3.0 * h);
        assert!(u.field.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn solution_scales_with_constant_slowness() {
        let u1 = sweep_solve(&uniform(64, 1.0), 0.7, &SweepConfig::default()).unwrap();
        let u2 = sweep_solve(&uniform(64, 2.0), 0.7, &SweepConfig::default()).unwrap();
        let g = u1.field.grid;
        for iy in 0..g.n() {
            for ix in 0..g.n() {
                let (x, y) = (g.coord::<f64>(ix), g.coord::<f64>(iy));
                if x * x + y * y <= 1.0 {
                    let (a, b) = (u1.field.at(ix, iy), u2.field.at(ix, iy));
                    assert!((b - 2.0 * a).abs() <= 1e-12 * (1.0 + b), "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn source_nodes_are_fixed_and_zero_at_a_node_source() {
        // n odd puts y = 0 on a node, so (1, 0) is itself a grid node.
        let m = uniform(33, 1.0);
        let u = sweep_solve(&m, 0.0, &SweepConfig::default()).unwrap();
        assert_eq!(u.field.at(32, 16), 0.0);
    }

    #[test]
    fn cycle_residuals_are_nonincreasing() {
        let g = CartesianGrid::new(96).unwrap();
        let bump = |x: f64, y: f64| 1.0 - 0.4 * (-((x - 0.2).powi(2) + y * y) / 0.05).exp();
        let m = SlownessField::rasterize(g, &bump, 0.0, 100.0).unwrap();
        let u = sweep_solve(&m, 2.0, &SweepConfig::default()).unwrap();
        let finite: Vec<f64> = u.residuals.iter().copied().filter(|r| r.is_finite()).collect();
        for w in finite.windows(2) {
            assert!(w[1] <= w[0], "residuals {:?}", u.residuals);
        }
    }

    #[test]
    fn sweep_order_does_not_change_solution() {
        let g = CartesianGrid::new(64).unwrap();
        let bump = |x: f64, y: f64| 1.0 + 0.5 * (-((x + 0.3).powi(2) + (y - 0.1).powi(2)) / 0.03).exp();
        let m = SlownessField::rasterize(g, &bump, 0.0, 100.0).unwrap();
        let a = sweep_solve(&m, 1.0, &SweepConfig::default()).unwrap();
        let mut cfg = SweepConfig::default();
        cfg.orderings = [DEFAULT_ORDERINGS[2], DEFAULT_ORDERINGS[0], DEFAULT_ORDERINGS[3], DEFAULT_ORDERINGS[1]];
        let b = sweep_solve(&m, 1.0, &cfg).unwrap();
        let diff = a
            .field
            .values
            .iter()
            .zip(&b.field.values)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-7, "diff {diff}");
    }

    #[test]
    fn causality_bounds() {
        let g = CartesianGrid::new(80).unwrap();
        let field = |x: f64, y: f64| 1.0 + 0.5 * (x * y).sin().abs();
        let m = SlownessField::rasterize(g, &field, 0.0, 100.0).unwrap();
        let u = sweep_solve(&m, 3.0, &SweepConfig::default()).unwrap();
        let (sx, sy) = (3.0f64.cos(), 3.0f64.sin());
        let h = g.spacing::<f64>();
        for iy in 0..g.n() {
            for ix in 0..g.n() {
                let (x, y) = (g.coord::<f64>(ix), g.coord::<f64>(iy));
                if x * x + y * y < 1.0 {
                    let d = ((x - sx).powi(2) + (y - sy).powi(2)).sqrt();
                    let v = u.field.at(ix, iy);
                    assert!(v >= 1.0 * d - 2.0 * h && v <= 1.5 * d + 2.0 * h);
                }
            }
        }
    }

    #[test]
    fn mask_sets_exterior_only() {
        let g = CartesianGrid::new(21).unwrap();
        let m = SlownessField::new(CartesianField::constant(g, 1.0)).unwrap();
        let masked = outside_mask_apply(&m, 100.0).unwrap();
        assert_eq!(masked.field.at(20, 20), 100.0);
        assert_eq!(masked.field.at(10, 10), 1.0);
    }

    #[test]
    fn mask_rejects_small_outside_slowness() {
        let g = CartesianGrid::new(21).unwrap();
        let m = SlownessField::new(CartesianField::constant(g, 1.0)).unwrap();
        assert!(outside_mask_apply(&m, 0.5).is_err());
        assert!(outside_mask_apply(&m, 5.0).is_err());
    }

    #[test]
    fn nonpositive_slowness_is_rejected() {
        let g = CartesianGrid::new(10).unwrap();
        assert!(SlownessField::new(CartesianField::constant(g, 0.0)).is_err());
        assert!(SlownessField::new(CartesianField::constant(g, -1.0)).is_err());
    }

    #[test]
    fn non_convergence_reports_residual() {
        let m = uniform(40, 1.0);
        let cfg = SweepConfig {
            max_sweeps: 4,
            ..SweepConfig::default()
        };
        match sweep_solve(&m, 0.0, &cfg) {
            Err(Error::NotConverged { sweeps, .. }) => assert_eq!(sweeps, 4),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn f32_solver_agrees_with_f64() {
        let g = CartesianGrid::new(48).unwrap();
        let m64 = SlownessField::rasterize(g, &Constant(1.0f64), 0.0, 100.0).unwrap();
        let m32 = SlownessField::rasterize(g, &Constant(1.0f32), 0.0, 100.0).unwrap();
        let cfg32 = SweepConfig { tol: 1e-5f32, ..SweepConfig::default() };
        let a = sweep_solve(&m64, 0.5, &SweepConfig::default()).unwrap();
        let b = sweep_solve(&m32, 0.5, &cfg32).unwrap();
        for (p, q) in a.field.values.iter().zip(&b.field.values) {
            if p.is_finite() && *p < 10.0 {
                assert!((p - *q as f64).abs() < 1e-4);
            }
        }
    }
}
