//! Grids, boundary geometry and interpolation between Cartesian and polar
//! representations of fields on the unit disk.
//!
//! Cartesian fields cover the square `[-1, 1]^2` and are stored row-major with
//! the x index fastest. Polar fields live on `theta_j = 2 pi j / n_theta`,
//! `rho_k = (k + 1) / n_rho` and are stored with the angular index fastest, so
//! the value at `(j, k)` sits at `k * n_theta + j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Positions that round slightly past the square are accepted up to this slack.
const EXTENT_SLACK: f64 = 1e-9;

/// Uniform node grid on `[-1, 1]^2` with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartesianGrid {
    n: usize,
}

impl CartesianGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::invalid(format!("cartesian grid needs n >= 8, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing<T: Real>(&self) -> T {
        T::lit(2.0) / T::from_usize(self.n - 1).unwrap()
    }

    /// Coordinate of node index `i` along either axis.
    pub fn coord<T: Real>(&self, i: usize) -> T {
        if i == self.n - 1 {
            return T::one();
        }
        -T::one() + T::from_usize(i).unwrap() * self.spacing::<T>()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Lower-left node of the cell containing `(x, y)` and the local offsets in `[0, 1]`.
    pub fn locate<T: Real>(&self, x: T, y: T) -> Result<(usize, usize, T, T)> {
        let slack = T::lit(EXTENT_SLACK);
        let lim = T::one() + slack;
        if !(x.abs() <= lim && y.abs() <= lim) {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) lies outside the grid extent [-1, 1]^2"
            )));
        }
        let h = self.spacing::<T>();
        let cell = |v: T| {
            let f = (v + T::one()) / h;
            let i = f.floor().max(T::zero()).to_usize().unwrap().min(self.n - 2);
            let t = (f - T::from_usize(i).unwrap()).max(T::zero()).min(T::one());
            (i, t)
        };
        let (ix, tx) = cell(x);
        let (iy, ty) = cell(y);
        Ok((ix, iy, tx, ty))
    }
}

/// Uniform `(theta, rho)` grid on the unit disk. The origin is excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarGrid {
    n_theta: usize,
    n_rho: usize,
}

impl PolarGrid {
    pub fn new(n_theta: usize, n_rho: usize) -> Result<Self> {
        if n_theta < 4 || n_theta % 2 != 0 {
            return Err(Error::invalid(format!(
                "polar grid needs an even n_theta >= 4, got {n_theta}"
            )));
        }
        if n_rho < 2 {
            return Err(Error::invalid(format!("polar grid needs n_rho >= 2, got {n_rho}")));
        }
        Ok(Self { n_theta, n_rho })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_rho
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dtheta<T: Real>(&self) -> T {
        T::TAU() / T::from_usize(self.n_theta).unwrap()
    }

    pub fn drho<T: Real>(&self) -> T {
        T::one() / T::from_usize(self.n_rho).unwrap()
    }

    pub fn theta<T: Real>(&self, j: usize) -> T {
        T::from_usize(j).unwrap() * self.dtheta::<T>()
    }

    pub fn rho<T: Real>(&self, k: usize) -> T {
        T::from_usize(k + 1).unwrap() / T::from_usize(self.n_rho).unwrap()
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        k * self.n_theta + j
    }

    /// Cartesian position of node `(j, k)`.
    pub fn point<T: Real>(&self, j: usize, k: usize) -> (T, T) {
        let (s, c) = self.theta::<T>(j).sin_cos();
        let r = self.rho::<T>(k);
        (r * c, r * s)
    }

    /// Area attributed to node `(j, k)`: `rho_k * drho * dtheta`.
    pub fn cell_area<T: Real>(&self, k: usize) -> T {
        self.rho::<T>(k) * self.drho::<T>() * self.dtheta::<T>()
    }

    /// Calls `f(index, weight)` for the interpolation stencil of the point `(x, y)`.
    ///
    /// Bilinear in `(theta, rho)` with periodic wrap in theta. Inside the first
    /// ring the field is interpolated linearly in rho towards the angular mean
    /// of the first ring, which stands in for the (excluded) origin value.
    /// Radii beyond 1 are clamped to the outer ring. The weights are
    /// nonnegative and sum to one.
    pub fn stencil<T: Real>(&self, x: T, y: T, mut f: impl FnMut(usize, T)) {
        let nt = self.n_theta;
        let rho = (x * x + y * y).sqrt().min(T::one());
        let mut theta = y.atan2(x);
        if theta < T::zero() {
            theta += T::TAU();
        }
        let ft = theta / self.dtheta::<T>();
        let j_floor = ft.floor();
        let wt = (ft - j_floor).max(T::zero()).min(T::one());
        let j0 = j_floor.to_usize().unwrap_or(0) % nt;
        let j1 = (j0 + 1) % nt;

        let fr = rho * T::from_usize(self.n_rho).unwrap() - T::one();
        if fr >= T::zero() {
            let k0 = fr.floor().to_usize().unwrap().min(self.n_rho - 2);
            let tr = (fr - T::from_usize(k0).unwrap()).max(T::zero()).min(T::one());
            let k1 = k0 + 1;
            f(self.index(j0, k0), (T::one() - wt) * (T::one() - tr));
            f(self.index(j1, k0), wt * (T::one() - tr));
            f(self.index(j0, k1), (T::one() - wt) * tr);
            f(self.index(j1, k1), wt * tr);
        } else {
            // fr + 1 = rho / rho_0 in [0, 1)
            let tr = (fr + T::one()).max(T::zero());
            f(self.index(j0, 0), (T::one() - wt) * tr);
            f(self.index(j1, 0), wt * tr);
            let share = (T::one() - tr) / T::from_usize(nt).unwrap();
            for j in 0..nt {
                f(self.index(j, 0), share);
            }
        }
    }
}

/// Sources and receivers equidistant on the unit circle, `n` of each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryRing {
    n: usize,
}

impl BoundaryRing {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("boundary ring needs at least 2 points, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn angle<T: Real>(&self, k: usize) -> T {
        T::TAU() * T::from_usize(k % self.n).unwrap() / T::from_usize(self.n).unwrap()
    }

    pub fn position<T: Real>(&self, k: usize) -> (T, T) {
        let (s, c) = self.angle::<T>(k).sin_cos();
        (c, s)
    }
}

/// A field that can be evaluated anywhere in the plane.
pub trait PlanarField<T: Real>: Sync {
    fn value_at(&self, x: T, y: T) -> T;
}

impl<T: Real, F: Fn(T, T) -> T + Sync> PlanarField<T> for F {
    fn value_at(&self, x: T, y: T) -> T {
        self(x, y)
    }
}

/// Constant field.
#[derive(Clone, Copy, Debug)]
pub struct Constant<T>(pub T);

impl<T: Real> PlanarField<T> for Constant<T> {
    fn value_at(&self, _x: T, _y: T) -> T {
        self.0
    }
}

/// Pointwise sum of two fields, e.g. background plus perturbation.
pub struct SumField<'a, T> {
    pub a: &'a dyn PlanarField<T>,
    pub b: &'a dyn PlanarField<T>,
}

impl<T: Real> PlanarField<T> for SumField<'_, T> {
    fn value_at(&self, x: T, y: T) -> T {
        self.a.value_at(x, y) + self.b.value_at(x, y)
    }
}

/// Nodal values on a [`CartesianGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianField<T> {
    pub grid: CartesianGrid,
    pub values: Vec<T>,
}

impl<T: Real> CartesianField<T> {
    pub fn new(grid: CartesianGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape("cartesian field", grid.len(), values.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: CartesianGrid, value: T) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: CartesianGrid, f: impl Fn(T, T) -> T) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..n {
            let y = grid.coord::<T>(iy);
            for ix in 0..n {
                values.push(f(grid.coord(ix), y));
            }
        }
        Self { grid, values }
    }

    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[self.grid.index(ix, iy)]
    }

    /// Bilinear interpolation at `(x, y)`.
    pub fn sample(&self, x: T, y: T) -> Result<T> {
        let (ix, iy, tx, ty) = self.grid.locate(x, y)?;
        let one = T::one();
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        Ok((one - ty) * ((one - tx) * v00 + tx * v10) + ty * ((one - tx) * v01 + tx * v11))
    }
}

impl<T: Real> PlanarField<T> for CartesianField<T> {
    /// Bilinear value, clamped to the square.
    fn value_at(&self, x: T, y: T) -> T {
        let one = T::one();
        self.sample(x.max(-one).min(one), y.max(-one).min(one))
            .expect("clamped point lies in the grid")
    }
}

/// Nodal values on a [`PolarGrid`], angular index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarField<T> {
    pub grid: PolarGrid,
    pub values: Vec<T>,
}

impl<T: Real> PolarField<T> {
    pub fn new(grid: PolarGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::shape("polar field", grid.len(), values.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PolarGrid) -> Self {
        Self {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    /// Evaluates `f(x, y)` at every polar node.
    pub fn from_fn(grid: PolarGrid, f: impl Fn(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.n_rho() {
            for j in 0..grid.n_theta() {
                let (x, y) = grid.point::<T>(j, k);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn at(&self, j: usize, k: usize) -> T {
        self.values[self.grid.index(j, k)]
    }

    /// Interpolated value at a Cartesian point inside the disk.
    pub fn sample(&self, x: T, y: T) -> T {
        let mut acc = T::zero();
        self.grid.stencil(x, y, |i, w| acc += w * self.values[i]);
        acc
    }

    /// The field rotated counter-clockwise by `steps` angular cells.
    pub fn rotated(&self, steps: isize) -> Self {
        let nt = self.grid.n_theta();
        let shift = steps.rem_euclid(nt as isize) as usize;
        let mut values = vec![T::zero(); self.values.len()];
        for k in 0..self.grid.n_rho() {
            for j in 0..nt {
                values[self.grid.index((j + shift) % nt, k)] = self.at(j, k);
            }
        }
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Area-weighted integral over the disk.
    pub fn integral(&self) -> T {
        let nt = self.grid.n_theta();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.grid.cell_area::<T>(i / nt))
            .sum()
    }
}

impl<T: Real> PlanarField<T> for PolarField<T> {
    fn value_at(&self, x: T, y: T) -> T {
        self.sample(x, y)
    }
}

/// Bilinear interpolation of a Cartesian field onto every polar node.
pub fn sample_cart_to_polar<T: Real>(
    field: &CartesianField<T>,
    pg: PolarGrid,
) -> Result<PolarField<T>> {
    let mut values = Vec::with_capacity(pg.len());
    for k in 0..pg.n_rho() {
        for j in 0..pg.n_theta() {
            let (x, y) = pg.point::<T>(j, k);
            values.push(field.sample(x, y)?);
        }
    }
    Ok(PolarField { grid: pg, values })
}

/// Interpolation of a polar field onto Cartesian nodes; nodes outside the unit
/// disk receive `outside_value`.
pub fn sample_polar_to_cart<T: Real>(
    field: &PolarField<T>,
    cg: CartesianGrid,
    outside_value: T,
) -> CartesianField<T> {
    CartesianField::from_fn(cg, |x, y| {
        if x * x + y * y > T::one() {
            outside_value
        } else {
            field.sample(x, y)
        }
    })
}
