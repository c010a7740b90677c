//! Full forward simulation over all boundary sources, differential imaging,
//! the shear re-indexing `h = r - s` and the multiplicative noise model.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eikonal::{sweep_solve, SlownessField, SweepConfig, DEFAULT_OUTSIDE_SLOWNESS};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryRing, CartesianGrid, PlanarField, SumField};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Placement of the Cartesian solver grid relative to each source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// One world-aligned grid shared by all sources.
    Fixed,
    /// For each source the grid is rotated so that the source sits at angle
    /// zero. Grid-orientation errors are then identical for every source and
    /// the discrete forward map commutes exactly with rotations by multiples
    /// of the source spacing.
    #[default]
    SourceAligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig<T> {
    pub grid: CartesianGrid,
    pub sweep: SweepConfig<T>,
    pub outside_slowness: T,
    pub frame: Frame,
}

impl<T: Real> ForwardConfig<T> {
    pub fn new(grid: CartesianGrid) -> Self {
        Self {
            grid,
            sweep: SweepConfig::default(),
            outside_slowness: T::lit(DEFAULT_OUTSIDE_SLOWNESS),
            frame: Frame::default(),
        }
    }
}

/// Traveltimes `u^s(x_r)` for every source/receiver pair, rows indexed by
/// source and columns by receiver.
///
/// `m` is the full slowness, evaluated analytically at (possibly rotated)
/// grid nodes. Receivers are read by bilinear interpolation at their exact
/// positions on the unit circle.
pub fn forward_measurement<T: Real>(
    m: &dyn PlanarField<T>,
    ring: BoundaryRing,
    cfg: &ForwardConfig<T>,
) -> Result<Matrix<T>> {
    let n = ring.n();
    let rows: Vec<Vec<T>> = match cfg.frame {
        Frame::Fixed => {
            let slowness =
                SlownessField::rasterize(cfg.grid, m, T::zero(), cfg.outside_slowness)?;
            (0..n)
                .into_par_iter()
                .map(|s| {
                    solve_row_with(&slowness, ring.angle(s), ring, &cfg.sweep, |r| ring.position(r))
                        .map_err(|e| source_failed(s, e))
                })
                .collect::<Result<_>>()?
        }
        Frame::SourceAligned => (0..n)
            .into_par_iter()
            .map(|s| {
                let slowness =
                    SlownessField::rasterize(cfg.grid, m, ring.angle(s), cfg.outside_slowness)?;
                // receiver r sits at the ring angle of offset r - s in this frame
                solve_row_with(&slowness, T::zero(), ring, &cfg.sweep, |r| ring.position((r + n - s) % n))
            })
            .enumerate()
            .map(|(s, row)| row.map_err(|e| source_failed(s, e)))
            .collect::<Result<_>>()?,
    };
    Ok(Matrix::from_vec(n, n, rows.concat()).expect("n rows of n receivers"))
}

/// Fixed-frame forward simulation on an already rasterized slowness.
pub fn forward_measurement_raster<T: Real>(
    slowness: &SlownessField<T>,
    ring: BoundaryRing,
    sweep: &SweepConfig<T>,
) -> Result<Matrix<T>> {
    let n = ring.n();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|s| {
            solve_row_with(slowness, ring.angle(s), ring, sweep, |r| ring.position(r))
                .map_err(|e| source_failed(s, e))
        })
        .collect::<Result<_>>()?;
    Ok(Matrix::from_vec(n, n, rows.concat()).expect("n rows of n receivers"))
}

fn source_failed(index: usize, e: Error) -> Error {
    Error::SourceFailed {
        index,
        source: Box::new(e),
    }
}

fn solve_row_with<T: Real>(
    slowness: &SlownessField<T>,
    source_angle: T,
    ring: BoundaryRing,
    sweep: &SweepConfig<T>,
    receiver: impl Fn(usize) -> (T, T),
) -> Result<Vec<T>> {
    let u = sweep_solve(slowness, source_angle, sweep)?;
    (0..ring.n())
        .map(|r| {
            let (x, y) = receiver(r);
            u.sample(x, y)
        })
        .collect()
}

/// Elementwise `u - u0`.
pub fn differential<T: Real>(u: &Matrix<T>, u0: &Matrix<T>) -> Result<Matrix<T>> {
    if u.shape() != u0.shape() {
        return Err(Error::shape(
            "differential",
            format!("{:?}", u0.shape()),
            format!("{:?}", u.shape()),
        ));
    }
    let data = u.data.iter().zip(&u0.data).map(|(a, b)| *a - *b).collect();
    Matrix::from_vec(u.rows(), u.cols(), data)
}

fn require_square<T: Real>(d: &Matrix<T>, context: &'static str) -> Result<usize> {
    if d.rows() != d.cols() {
        return Err(Error::shape(context, "a square matrix", format!("{:?}", d.shape())));
    }
    Ok(d.rows())
}

/// `(s, r)` to `(s, h)` with `h = r - s mod n`.
pub fn shear<T: Real>(d: &Matrix<T>) -> Result<Matrix<T>> {
    let n = require_square(d, "shear")?;
    Ok(Matrix::from_fn(n, n, |s, h| d.get(s, (s + h) % n)))
}

/// Inverse of [`shear`].
pub fn unshear<T: Real>(d: &Matrix<T>) -> Result<Matrix<T>> {
    let n = require_square(d, "unshear")?;
    Ok(Matrix::from_fn(n, n, |s, r| d.get(s, (r + n - s) % n)))
}

/// `d^delta = (1 + Z delta) d + Z delta u0` with one standard normal `Z` per
/// entry, shared by both terms. `u0` must be sheared like `d`.
pub fn add_noise<T: Real, R: Rng + ?Sized>(
    d: &Matrix<T>,
    delta: T,
    u0_sheared: &Matrix<T>,
    rng: &mut R,
) -> Result<Matrix<T>> {
    if !(delta >= T::zero()) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {delta}")));
    }
    if d.shape() != u0_sheared.shape() {
        return Err(Error::shape(
            "add_noise",
            format!("{:?}", d.shape()),
            format!("{:?}", u0_sheared.shape()),
        ));
    }
    if delta == T::zero() {
        return Ok(d.clone());
    }
    let data = d
        .data
        .iter()
        .zip(&u0_sheared.data)
        .map(|(&v, &b)| {
            let z = T::lit(rng.sample::<f64, _>(StandardNormal));
            (T::one() + z * delta) * v + z * delta * b
        })
        .collect();
    Matrix::from_vec(d.rows(), d.cols(), data)
}

/// Sheared differential data together with the background traveltimes it
/// was measured against.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement<T> {
    /// `d(s, h)`.
    pub d: Matrix<T>,
    /// `u0^s(x_r)`, unsheared.
    pub u0: Matrix<T>,
    pub delta: T,
}

impl<T: Real> Measurement<T> {
    /// Runs the full pipeline for slowness `background + perturbation`
    /// against precomputed background traveltimes `u0`.
    pub fn simulate(
        background: &dyn PlanarField<T>,
        perturbation: &dyn PlanarField<T>,
        u0: &Matrix<T>,
        ring: BoundaryRing,
        cfg: &ForwardConfig<T>,
    ) -> Result<Self> {
        let m = SumField {
            a: background,
            b: perturbation,
        };
        let u = forward_measurement(&m, ring, cfg)?;
        let d = shear(&differential(&u, u0)?)?;
        Ok(Self {
            d,
            u0: u0.clone(),
            delta: T::zero(),
        })
    }

    pub fn u0_sheared(&self) -> Matrix<T> {
        shear(&self.u0).expect("background is square")
    }

    pub fn with_noise<R: Rng + ?Sized>(&self, delta: T, rng: &mut R) -> Result<Self> {
        let d = add_noise(&self.d, delta, &self.u0_sheared(), rng)?;
        Ok(Self {
            d,
            u0: self.u0.clone(),
            delta,
        })
    }
}
