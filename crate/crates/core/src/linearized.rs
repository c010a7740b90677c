//! First-order traveltime perturbation for a constant background: straight
//! chord integrals and the polar kernel that turns them into a family of
//! circular convolutions along the angular axis.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryRing, PlanarField, PolarField, PolarGrid};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Straight segment between two points of the unit circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chord<T> {
    pub start: (T, T),
    pub end: (T, T),
}

impl<T: Real> Chord<T> {
    /// Chord from the source at angle `s` to the receiver at angle `s + h`.
    pub fn from_angles(s: T, h: T) -> Self {
        let r = s + h;
        Self {
            start: (s.cos(), s.sin()),
            end: (r.cos(), r.sin()),
        }
    }

    pub fn point(&self, tau: T) -> (T, T) {
        (
            self.start.0 + tau * (self.end.0 - self.start.0),
            self.start.1 + tau * (self.end.1 - self.start.1),
        )
    }

    pub fn length(&self) -> T {
        let dx = self.end.0 - self.start.0;
        let dy = self.end.1 - self.start.1;
        (dx * dx + dy * dy).sqrt()
    }

    /// Midpoint-rule samples `(x, y, arclength weight)`.
    fn samples(&self, n_quad: usize) -> impl Iterator<Item = (T, T, T)> + '_ {
        let n = T::from_usize(n_quad).unwrap();
        let w = self.length() / n;
        (0..n_quad).map(move |i| {
            let tau = (T::from_usize(i).unwrap() + T::lit(0.5)) / n;
            let (x, y) = self.point(tau);
            (x, y, w)
        })
    }
}

/// `|x_s - x_r| * integral_0^1 m(x_s + tau (x_r - x_s)) dtau` by the
/// composite midpoint rule. Zero when `h` is a multiple of `2 pi`.
pub fn chord_integral<T: Real>(
    m: &(impl PlanarField<T> + ?Sized),
    s: T,
    h: T,
    n_quad: usize,
) -> Result<T> {
    if n_quad < 2 {
        return Err(Error::invalid(format!("n_quad must be at least 2, got {n_quad}")));
    }
    let chord = Chord::from_angles(s, h);
    if chord.length() <= T::epsilon() {
        return Ok(T::zero());
    }
    Ok(chord
        .samples(n_quad)
        .map(|(x, y, w)| w * m.value_at(x, y))
        .sum())
}

/// Default chord sample count for a polar grid: four samples per cell along a
/// diameter, with the cell size taken as the smallest cell the skip check
/// looks at (radial spacing, or the angular width at radius `2 drho`).
pub fn default_n_quad(pg: PolarGrid) -> usize {
    let drho = pg.drho::<f64>();
    let cell = drho.min(2.0 * drho * pg.dtheta::<f64>());
    (8.0 / cell).ceil() as usize
}

/// Kernel entry: `kappa(h, rho_k, dtheta)` with `dtheta = s - theta` in
/// angular cells.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Tap<T> {
    h: u32,
    k: u32,
    delta: u32,
    value: T,
}

/// Discretized first-order kernel on a polar grid.
///
/// `d(s, h) = sum_{k, delta} kappa[h][k][delta] * m[k][s q - delta]` where
/// `q = n_theta / n_sources` and angular indices wrap.
#[derive(Clone, Debug)]
pub struct LinearKernel<T> {
    grid: PolarGrid,
    ring: BoundaryRing,
    n_quad: usize,
    /// Dense `[h][k][delta]`.
    kappa: Vec<T>,
    by_h: Vec<Vec<Tap<T>>>,
    by_k: Vec<Vec<Tap<T>>>,
}

impl<T: Real> LinearKernel<T> {
    /// Rebuilds a kernel from its dense table.
    pub fn from_dense(
        grid: PolarGrid,
        ring: BoundaryRing,
        n_quad: usize,
        kappa: Vec<T>,
    ) -> Result<Self> {
        check_compatible(grid, ring)?;
        let expected = ring.n() * grid.len();
        if kappa.len() != expected {
            return Err(Error::shape("kernel table", expected, kappa.len()));
        }
        let nt = grid.n_theta();
        let nr = grid.n_rho();
        let mut by_h = vec![Vec::new(); ring.n()];
        let mut by_k = vec![Vec::new(); nr];
        for (h, taps) in by_h.iter_mut().enumerate() {
            for k in 0..nr {
                for delta in 0..nt {
                    let value = kappa[(h * nr + k) * nt + delta];
                    if value != T::zero() {
                        let tap = Tap {
                            h: h as u32,
                            k: k as u32,
                            delta: delta as u32,
                            value,
                        };
                        taps.push(tap);
                        by_k[k].push(tap);
                    }
                }
            }
        }
        Ok(Self {
            grid,
            ring,
            n_quad,
            kappa,
            by_h,
            by_k,
        })
    }

    pub fn grid(&self) -> PolarGrid {
        self.grid
    }

    pub fn ring(&self) -> BoundaryRing {
        self.ring
    }

    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    pub fn n_h(&self) -> usize {
        self.ring.n()
    }

    /// `[n_h, n_rho, n_theta]`.
    pub fn shape(&self) -> [usize; 3] {
        [self.ring.n(), self.grid.n_rho(), self.grid.n_theta()]
    }

    pub fn get(&self, h: usize, k: usize, delta: usize) -> T {
        let [_, nr, nt] = self.shape();
        self.kappa[(h * nr + k) * nt + delta]
    }

    pub fn dense(&self) -> &[T] {
        &self.kappa
    }

    /// Total deposited arclength for offset `h`.
    pub fn mass(&self, h: usize) -> T {
        self.by_h[h].iter().map(|t| t.value).sum()
    }

    fn step(&self) -> usize {
        self.grid.n_theta() / self.ring.n()
    }

    /// `K m`, the sheared first-order data `d(s, h)`.
    pub fn apply(&self, m: &PolarField<T>) -> Result<Matrix<T>> {
        if m.grid != self.grid {
            return Err(Error::shape(
                "apply_k",
                format!("{:?}", self.grid),
                format!("{:?}", m.grid),
            ));
        }
        let n = self.ring.n();
        let nt = self.grid.n_theta();
        let q = self.step();
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|s| {
                let base = s * q + nt;
                self.by_h
                    .iter()
                    .map(|taps| {
                        taps.iter()
                            .map(|t| {
                                let j = (base - t.delta as usize) % nt;
                                t.value * m.values[t.k as usize * nt + j]
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Matrix::from_vec(n, n, rows.concat())
    }

    /// `K^T d`, exact transpose of [`apply`](Self::apply) for the plain
    /// Euclidean inner products.
    pub fn apply_adjoint(&self, d: &Matrix<T>) -> Result<PolarField<T>> {
        let n = self.ring.n();
        if d.shape() != (n, n) {
            return Err(Error::shape(
                "apply_k_adjoint",
                format!("{:?}", (n, n)),
                format!("{:?}", d.shape()),
            ));
        }
        let nt = self.grid.n_theta();
        let q = self.step();
        let rings: Vec<Vec<T>> = self
            .by_k
            .par_iter()
            .map(|taps| {
                let mut out = vec![T::zero(); nt];
                for t in taps {
                    let h = t.h as usize;
                    for s in 0..n {
                        let j = (s * q + nt - t.delta as usize) % nt;
                        out[j] += t.value * d.get(s, h);
                    }
                }
                out
            })
            .collect();
        PolarField::new(self.grid, rings.concat())
    }

    /// `K^T K x`.
    pub fn apply_normal(&self, x: &PolarField<T>) -> Result<PolarField<T>> {
        self.apply_adjoint(&self.apply(x)?)
    }

    /// Materialized `K` with rows `s * n_h + h` and columns in polar storage
    /// order.
    pub fn to_matrix(&self) -> Matrix<T> {
        let n = self.ring.n();
        let nt = self.grid.n_theta();
        let q = self.step();
        let mut out = Matrix::zeros(n * n, self.grid.len());
        for s in 0..n {
            for (h, taps) in self.by_h.iter().enumerate() {
                for t in taps {
                    let j = (s * q + nt - t.delta as usize) % nt;
                    let col = t.k as usize * nt + j;
                    let row = s * n + h;
                    out.set(row, col, out.get(row, col) + t.value);
                }
            }
        }
        out
    }
}

fn check_compatible(grid: PolarGrid, ring: BoundaryRing) -> Result<()> {
    if grid.n_theta() % ring.n() != 0 {
        return Err(Error::invalid(format!(
            "angular grid size {} must be a multiple of the number of sources {}",
            grid.n_theta(),
            ring.n()
        )));
    }
    Ok(())
}

/// Walks the chord from the source at angle zero for every offset and
/// scatters each sample's arclength onto the polar grid with the
/// interpolation stencil (the transpose of bilinear sampling).
pub fn assemble_kernel<T: Real>(
    grid: PolarGrid,
    ring: BoundaryRing,
    n_quad: usize,
) -> Result<LinearKernel<T>> {
    check_compatible(grid, ring)?;
    if n_quad < 2 {
        return Err(Error::invalid(format!("n_quad must be at least 2, got {n_quad}")));
    }
    let nt = grid.n_theta();
    let nr = grid.n_rho();
    let slabs: Vec<Vec<T>> = (0..ring.n())
        .into_par_iter()
        .map(|h| {
            let mut slab = vec![T::zero(); nr * nt];
            if h == 0 {
                return Ok(slab);
            }
            let chord = Chord::from_angles(T::zero(), ring.angle::<T>(h));
            check_skipping(grid, &chord, n_quad)?;
            for (x, y, w) in chord.samples(n_quad) {
                grid.stencil(x, y, |i, wi| {
                    let (k, j) = (i / nt, i % nt);
                    slab[k * nt + (nt - j) % nt] += w * wi;
                });
            }
            Ok(slab)
        })
        .collect::<Result<_>>()?;
    LinearKernel::from_dense(grid, ring, n_quad, slabs.concat())
}

/// Fails when consecutive samples at radius at least `2 drho` land more than
/// one cell apart in either polar direction.
fn check_skipping<T: Real>(grid: PolarGrid, chord: &Chord<T>, n_quad: usize) -> Result<()> {
    let nt = grid.n_theta() as i64;
    let r_min = T::lit(2.0) * grid.drho::<T>();
    let cell = |x: T, y: T| -> Option<(i64, i64)> {
        let rho = (x * x + y * y).sqrt();
        if rho < r_min {
            return None;
        }
        let mut theta = y.atan2(x);
        if theta < T::zero() {
            theta += T::TAU();
        }
        let j = (theta / grid.dtheta::<T>()).floor().to_i64().unwrap();
        let k = (rho / grid.drho::<T>()).floor().to_i64().unwrap();
        Some((j, k))
    };
    let mut prev: Option<(i64, i64)> = None;
    for (x, y, _) in chord.samples(n_quad) {
        let here = cell(x, y);
        if let (Some((j0, k0)), Some((j1, k1))) = (prev, here) {
            let dj = (j1 - j0).rem_euclid(nt);
            let dj = dj.min(nt - dj);
            if dj > 1 || (k1 - k0).abs() > 1 {
                return Err(Error::CellSkipping { n_quad });
            }
        }
        prev = here;
    }
    Ok(())
}
