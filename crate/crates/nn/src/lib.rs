//! Convolutional networks for the sheared traveltime data: a small
//! reverse-mode tape over periodic convolutions and Haar splits, the
//! multiscale block, the forward and inverse networks, Nadam and the
//! staged training loop.
//!
//! Everything is generic over [`NnScalar`]; training runs in `f32` and the
//! gradient checks in `f64`.

pub mod bcr;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod train;

pub use bcr::{Bcr, BcrSpec};
pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use graph::{Graph, Var};
pub use layers::{Activation, Conv1dSpec, Conv2dSpec};
pub use loss::{mse, psnr, Psnr};
pub use nets::{Architecture, ForwardNetSpec, InverseNetSpec, Net};
pub use optim::{Nadam, NadamConfig};
pub use params::{Grads, ParamId, ParamLayout, Params};
pub use scalar::NnScalar;
pub use train::{History, Samples, Stage, TrainConfig};

pub type Params32 = Params<f32>;
pub type Params64 = Params<f64>;
pub type Samples32 = Samples<f32>;
pub type Checkpoint32 = Checkpoint<f32>;
