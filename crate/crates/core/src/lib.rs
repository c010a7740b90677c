//! Traveltime tomography on the unit disk: eikonal forward modelling by fast
//! sweeping, the sheared measurement layout, the linearized convolution
//! kernel, filtered back-projection and synthetic ellipse datasets.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the bottom of this file name the `f64` instantiations used by the
//! command-line tools.

pub mod datagen;
pub mod eikonal;
pub mod error;
pub mod geometry;
pub mod linearized;
pub mod matrix;
pub mod measurement;
pub mod reconstruction;
pub mod scalar;
pub mod tensorfile;

pub use error::{Error, Result};
pub use geometry::{
    BoundaryRing, CartesianField, CartesianGrid, Constant, PlanarField, PolarField, PolarGrid,
};
pub use matrix::Matrix;
pub use scalar::{Dtype, Real};

pub type Field = PolarField<f64>;
pub type Grid2 = CartesianField<f64>;
pub type DataMatrix = Matrix<f64>;
pub type Kernel = linearized::LinearKernel<f64>;
pub type Slowness = eikonal::SlownessField<f64>;
pub type Traveltime = eikonal::TraveltimeField<f64>;
pub type Forward = measurement::ForwardConfig<f64>;
pub type Sweep = eikonal::SweepConfig<f64>;
pub type Fbp = reconstruction::FbpConfig<f64>;
pub type Grids = datagen::DatasetGrids<f64>;
pub type Data = datagen::Dataset<f64>;
pub type TensorF64 = tensorfile::Tensor<f64>;
