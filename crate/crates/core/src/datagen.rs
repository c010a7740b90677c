//! Random ellipse-inclusion perturbations and the paired datasets
//! `(d, m~)` used for training.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryRing, Constant, PlanarField, PolarField, PolarGrid};
use crate::matrix::Matrix;
use crate::measurement::{add_noise, forward_measurement, shear, ForwardConfig, Measurement};
use crate::scalar::Real;
use crate::tensorfile::Tensor;

pub const NEGATIVE_AMPLITUDE: f64 = -0.5;
pub const POSITIVE_AMPLITUDE: f64 = 2.0;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Boundary points used for the containment and overlap tests.
const BOUNDARY_SAMPLES: usize = 256;
/// Sampled ellipses keep this distance from the unit circle.
const CONTAINMENT_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InclusionKind {
    Negative,
    Positive,
    Mixture,
}

impl InclusionKind {
    /// Amplitudes an ellipse of this kind can carry.
    pub fn amplitudes(self) -> Vec<f64> {
        match self {
            InclusionKind::Negative => vec![NEGATIVE_AMPLITUDE],
            InclusionKind::Positive => vec![POSITIVE_AMPLITUDE],
            InclusionKind::Mixture => vec![NEGATIVE_AMPLITUDE, POSITIVE_AMPLITUDE],
        }
    }
}

/// Constant-valued ellipse. `semi_axes.0 >= semi_axes.1 > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
    pub amplitude: f64,
}

impl Ellipse {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.semi_axes;
        if !(a >= b && b > 0.0) {
            return Err(Error::invalid(format!("ellipse semi-axes must satisfy a >= b > 0, got {a}, {b}")));
        }
        if !(self.amplitude > -1.0) {
            return Err(Error::invalid(format!(
                "ellipse amplitude must exceed -1, got {}",
                self.amplitude
            )));
        }
        if self.max_radius() > 1.0 {
            return Err(Error::invalid("ellipse leaves the unit disk"));
        }
        Ok(())
    }

    /// Full axis lengths.
    pub fn width(&self) -> f64 {
        2.0 * self.semi_axes.0
    }

    pub fn height(&self) -> f64 {
        2.0 * self.semi_axes.1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = (c * dx + s * dy) / self.semi_axes.0;
        let v = (-s * dx + c * dy) / self.semi_axes.1;
        u * u + v * v <= 1.0
    }

    pub fn boundary_point(&self, t: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (self.semi_axes.0 * t.cos(), self.semi_axes.1 * t.sin());
        (self.center.0 + c * u - s * v, self.center.1 + s * u + c * v)
    }

    pub fn boundary(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..n).map(move |i| self.boundary_point(std::f64::consts::TAU * i as f64 / n as f64))
    }

    /// Largest sampled distance of the boundary from the origin.
    pub fn max_radius(&self) -> f64 {
        self.boundary(BOUNDARY_SAMPLES)
            .map(|(x, y)| x.hypot(y))
            .fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.0 * self.semi_axes.1
    }

    /// Sampled overlap test: a boundary point or the centre of either
    /// ellipse inside the other.
    pub fn overlaps(&self, other: &Ellipse) -> bool {
        let inside = |e: &Ellipse, f: &Ellipse| {
            e.contains(f.center.0, f.center.1)
                || f.boundary(BOUNDARY_SAMPLES).any(|(x, y)| e.contains(x, y))
        };
        inside(self, other) || inside(other, self)
    }
}

/// Sum of ellipse indicators times amplitudes, evaluated exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EllipseField(pub Vec<Ellipse>);

impl<T: Real> PlanarField<T> for EllipseField {
    fn value_at(&self, x: T, y: T) -> T {
        let (x, y) = (x.as_f64(), y.as_f64());
        T::lit(
            self.0
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.amplitude)
                .sum(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: InclusionKind,
    pub n_e: usize,
    pub n_samples: usize,
    /// Multiplicative noise level delta.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    /// Leading fraction of samples used for training.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    /// Sample ellipses as usual but simulate and label with a zero
    /// perturbation.
    #[serde(default)]
    pub zero_perturbation: bool,
}

fn default_train_fraction() -> f64 {
    0.75
}

fn default_max_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl DatasetSpec {
    pub fn new(kind: InclusionKind, n_e: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            kind,
            n_e,
            n_samples,
            noise: 0.0,
            seed,
            train_fraction: default_train_fraction(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            zero_perturbation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_e == 0 {
            return Err(Error::invalid("n_e must be at least 1"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::invalid(format!("noise must be nonnegative, got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::invalid(format!(
                "train_fraction must lie in [0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be positive"));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        (self.train_fraction * self.n_samples as f64).round() as usize
    }

    /// Independent generator for sample `index` and purpose `stream`.
    fn rng(&self, index: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * index as u64 + stream);
        rng
    }

    pub fn ellipse_rng(&self, index: usize) -> ChaCha8Rng {
        self.rng(index, 0)
    }

    pub fn noise_rng(&self, index: usize) -> ChaCha8Rng {
        self.rng(index, 1)
    }
}

/// Rejection sampling of `spec.n_e` disjoint ellipses inside the disk.
pub fn sample_ellipses<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<Vec<Ellipse>> {
    spec.validate()?;
    let mut out: Vec<Ellipse> = Vec::with_capacity(spec.n_e);
    let mut attempts = 0;
    while out.len() < spec.n_e {
        if attempts == spec.max_attempts {
            return Err(Error::SamplingExhausted { attempts });
        }
        attempts += 1;
        let negative = match spec.kind {
            InclusionKind::Negative => true,
            InclusionKind::Positive => false,
            InclusionKind::Mixture => rng.gen_bool(0.5),
        };
        let (width, height, amplitude) = if negative {
            (rng.gen_range(0.1..0.2), rng.gen_range(0.05..0.1), NEGATIVE_AMPLITUDE)
        } else {
            (rng.gen_range(0.2..0.4), rng.gen_range(0.1..0.2), POSITIVE_AMPLITUDE)
        };
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let e = Ellipse {
            center: (r * phi.cos(), r * phi.sin()),
            semi_axes: (width / 2.0, height / 2.0),
            angle,
            amplitude,
        };
        if e.max_radius() <= 1.0 - CONTAINMENT_MARGIN && out.iter().all(|o| !o.overlaps(&e)) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Nodal values: amplitude of the ellipse containing each polar node.
pub fn rasterize<T: Real>(ellipses: &[Ellipse], pg: PolarGrid) -> PolarField<T> {
    let field = EllipseField(ellipses.to_vec());
    PolarField::from_fn(pg, |x, y| field.value_at(x, y))
}

/// Geometry shared by every sample of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetGrids<T> {
    pub polar: PolarGrid,
    pub ring: BoundaryRing,
    pub forward: ForwardConfig<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub spec: DatasetSpec,
    pub grids: DatasetGrids<T>,
    pub ellipses: Vec<Vec<Ellipse>>,
    /// Sheared differential data `d(s, h)`, noisy when `spec.noise > 0`.
    pub inputs: Vec<Matrix<T>>,
    pub labels: Vec<PolarField<T>>,
    /// Background traveltimes, unsheared.
    pub u0: Matrix<T>,
}

/// Simulates every sample of `spec` against the unit background.
pub fn generate_dataset<T: Real>(spec: &DatasetSpec, grids: &DatasetGrids<T>) -> Result<Dataset<T>> {
    spec.validate()?;
    let background = Constant(T::one());
    let u0 = forward_measurement(&background, grids.ring, &grids.forward)?;
    let samples: Vec<(Vec<Ellipse>, Matrix<T>, PolarField<T>)> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            let ellipses = sample_ellipses(spec, &mut spec.ellipse_rng(i))?;
            let active = if spec.zero_perturbation { &[][..] } else { &ellipses[..] };
            let field = EllipseField(active.to_vec());
            let m = Measurement::simulate(&background, &field, &u0, grids.ring, &grids.forward)?;
            Ok((ellipses.clone(), m.d, rasterize(active, grids.polar)))
        })
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e: Error| Error::SampleFailed {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut ellipses = Vec::with_capacity(samples.len());
    let mut inputs = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for (e, d, l) in samples {
        ellipses.push(e);
        inputs.push(d);
        labels.push(l);
    }
    let clean = Dataset {
        spec: DatasetSpec {
            noise: 0.0,
            ..spec.clone()
        },
        grids: grids.clone(),
        ellipses,
        inputs,
        labels,
        u0,
    };
    if spec.noise > 0.0 {
        clean.with_noise(spec.noise)
    } else {
        Ok(clean)
    }
}

const MANIFEST: &str = "manifest.json";
const INPUTS: &str = "inputs.tttk";
const LABELS: &str = "labels.tttk";
const U0: &str = "u0.tttk";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest<T> {
    format_version: u32,
    spec: DatasetSpec,
    grids: DatasetGrids<T>,
    /// Amplitudes the inclusion kind can produce.
    amplitudes: Vec<f64>,
    n_train: usize,
    n_test: usize,
    inputs: String,
    labels: String,
    u0: String,
    ellipses: Vec<Vec<Ellipse>>,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn train_range(&self) -> Range<usize> {
        0..self.spec.n_train().min(self.len())
    }

    pub fn test_range(&self) -> Range<usize> {
        self.train_range().end..self.len()
    }

    /// Noisy copy of a clean dataset. Sample `i` draws its noise from the
    /// stream reserved for it, so the result does not depend on evaluation
    /// order.
    pub fn with_noise(&self, delta: f64) -> Result<Self> {
        if self.spec.noise != 0.0 {
            return Err(Error::invalid("noise can only be added to a clean dataset"));
        }
        let u0s = shear(&self.u0)?;
        let inputs = self
            .inputs
            .par_iter()
            .enumerate()
            .map(|(i, d)| add_noise(d, T::lit(delta), &u0s, &mut self.spec.noise_rng(i)))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: DatasetSpec {
                noise: delta,
                ..self.spec.clone()
            },
            inputs,
            ..self.clone()
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format_version: 1,
            spec: self.spec.clone(),
            grids: self.grids.clone(),
            amplitudes: self.spec.kind.amplitudes(),
            n_train: self.train_range().len(),
            n_test: self.test_range().len(),
            inputs: INPUTS.into(),
            labels: LABELS.into(),
            u0: U0.into(),
            ellipses: self.ellipses.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = dir.join(MANIFEST);
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        stack_matrices(&self.inputs, self.grids.ring.n())?.save(dir.join(INPUTS))?;
        let labels: Vec<_> = self.labels.iter().map(Tensor::from_polar).collect();
        stack_or_empty(&labels, vec![self.grids.polar.n_rho(), self.grids.polar.n_theta()])
            .save(dir.join(LABELS))?;
        Tensor::from_matrix(&self.u0).save(dir.join(U0))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest<T> = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let bad = |file: &str, message: String| Error::Format {
            path: dir.join(file),
            message,
        };
        let inputs = Tensor::<T>::load_converted(dir.join(&m.inputs))?;
        let labels = Tensor::<T>::load_converted(dir.join(&m.labels))?;
        let u0 = Tensor::<T>::load_converted(dir.join(&m.u0))?.to_matrix()?;
        let n = m.spec.n_samples;
        let ns = m.grids.ring.n();
        let pg = m.grids.polar;
        if inputs.dims != [n, ns, ns] {
            return Err(bad(&m.inputs, format!("expected dims {:?}, got {:?}", [n, ns, ns], inputs.dims)));
        }
        let want = [n, pg.n_rho(), pg.n_theta()];
        if labels.dims != want {
            return Err(bad(&m.labels, format!("expected dims {want:?}, got {:?}", labels.dims)));
        }
        if m.ellipses.len() != n {
            return Err(bad(MANIFEST, format!("{} ellipse lists for {n} samples", m.ellipses.len())));
        }
        let inputs = (0..n)
            .map(|i| inputs.slice(i)?.to_matrix())
            .collect::<Result<_>>()?;
        let labels = (0..n)
            .map(|i| PolarField::new(pg, labels.slice(i)?.data))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: m.spec,
            grids: m.grids,
            ellipses: m.ellipses,
            inputs,
            labels,
            u0,
        })
    }
}

fn stack_matrices<T: Real>(items: &[Matrix<T>], n: usize) -> Result<Tensor<T>> {
    let tensors: Vec<_> = items.iter().map(Tensor::from_matrix).collect();
    Ok(stack_or_empty(&tensors, vec![n, n]))
}

fn stack_or_empty<T: Real>(items: &[Tensor<T>], inner: Vec<usize>) -> Tensor<T> {
    Tensor::stack(items).unwrap_or_else(|_| {
        let mut dims = vec![0];
        dims.extend(inner);
        Tensor { dims, data: vec![] }
    })
}
