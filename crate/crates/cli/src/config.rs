//! The run configuration: one TOML document holding every module parameter.
//!
//! Every table and key is optional; missing entries take the defaults below,
//! which reproduce the desk-scale setup (64 x 32 polar grid, 64 sources,
//! 81-node solver grid, 2,048 negative-inclusion samples, c = 16).

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tttk_core::datagen::{DatasetGrids, DatasetSpec, InclusionKind};
use tttk_core::eikonal::SweepConfig;
use tttk_core::measurement::{ForwardConfig, Frame};
use tttk_core::reconstruction::{FbpConfig, Regularization};
use tttk_core::{BoundaryRing, CartesianGrid, PolarGrid};
use tttk_nn::{Architecture, InverseNetSpec, Stage, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub kernel: KernelConfig,
    pub fbp: FbpSection,
    pub dataset: DatasetSection,
    pub net: NetConfig,
    pub train: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Solver nodes per side of `[-1, 1]^2`.
    pub cartesian: usize,
    pub n_theta: usize,
    pub n_rho: usize,
    /// Sources, which are also the receivers.
    pub n_sources: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cartesian: 81,
            n_theta: 64,
            n_rho: 32,
            n_sources: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub outside_slowness: f64,
    pub frame: Frame,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SweepConfig::<f64>::default();
        Self {
            tol: s.tol,
            max_sweeps: s.max_sweeps,
            outside_slowness: tttk_core::eikonal::DEFAULT_OUTSIDE_SLOWNESS,
            frame: Frame::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Quadrature points per chord; derived from the polar grid when absent.
    pub n_quad: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbpSection {
    /// Ridge parameter, absolute or relative to the largest diagonal entry
    /// of `K^T K`.
    pub regularization: Regularization<f64>,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for FbpSection {
    fn default() -> Self {
        let f = FbpConfig::<f64>::default();
        Self {
            regularization: f.regularization,
            cg_tol: f.cg_tol,
            cg_max_iter: f.cg_max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: InclusionKind,
    pub n_e: usize,
    pub n_samples: usize,
    pub noise: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub max_attempts: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let s = DatasetSpec::new(InclusionKind::Negative, 2, 2048, 0);
        Self {
            kind: s.kind,
            n_e: s.n_e,
            n_samples: s.n_samples,
            noise: s.noise,
            seed: s.seed,
            train_fraction: s.train_fraction,
            max_attempts: s.max_attempts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub c: usize,
    pub c2: usize,
    pub w: usize,
    pub n_cnn: usize,
    pub n_cnn2: usize,
    pub bcr_window: usize,
    pub levels: Option<usize>,
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            c: 16,
            c2: 16,
            w: 3,
            n_cnn: 3,
            n_cnn2: 3,
            bcr_window: 3,
            levels: None,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Desk,
    Full,
    /// Use the `stages` list.
    Custom,
}

/// Floating-point type of network parameters and activations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub precision: Precision,
    pub schedule: Schedule,
    /// Overrides the epoch count of every preset stage.
    pub epochs_per_stage: Option<usize>,
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub test_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            precision: Precision::F32,
            schedule: Schedule::Desk,
            epochs_per_stage: None,
            stages: Vec::new(),
            seed: 0,
            test_every: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn cartesian(&self) -> Result<CartesianGrid> {
        Ok(CartesianGrid::new(self.grid.cartesian)?)
    }

    pub fn polar(&self) -> Result<PolarGrid> {
        Ok(PolarGrid::new(self.grid.n_theta, self.grid.n_rho)?)
    }

    pub fn ring(&self) -> Result<BoundaryRing> {
        Ok(BoundaryRing::new(self.grid.n_sources)?)
    }

    pub fn sweep(&self) -> SweepConfig<f64> {
        SweepConfig {
            tol: self.solver.tol,
            max_sweeps: self.solver.max_sweeps,
            ..SweepConfig::default()
        }
    }

    pub fn forward(&self) -> Result<ForwardConfig<f64>> {
        Ok(ForwardConfig {
            grid: self.cartesian()?,
            sweep: self.sweep(),
            outside_slowness: self.solver.outside_slowness,
            frame: self.solver.frame,
        })
    }

    pub fn grids(&self) -> Result<DatasetGrids<f64>> {
        Ok(DatasetGrids {
            polar: self.polar()?,
            ring: self.ring()?,
            forward: self.forward()?,
        })
    }

    pub fn fbp(&self) -> FbpConfig<f64> {
        FbpConfig {
            regularization: self.fbp.regularization,
            cg_tol: self.fbp.cg_tol,
            cg_max_iter: self.fbp.cg_max_iter,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let d = &self.dataset;
        DatasetSpec {
            noise: d.noise,
            train_fraction: d.train_fraction,
            max_attempts: d.max_attempts,
            ..DatasetSpec::new(d.kind, d.n_e, d.n_samples, d.seed)
        }
    }

    pub fn architecture(&self) -> Architecture {
        let n = &self.net;
        Architecture::Inverse(InverseNetSpec {
            c2: n.c2,
            w: n.w,
            bcr_window: n.bcr_window,
            levels: n.levels,
            ..InverseNetSpec::with_sizes(self.grid.n_theta, self.grid.n_rho, n.c, n.n_cnn, n.n_cnn2)
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let mut cfg = match t.schedule {
            Schedule::Desk => TrainConfig::desk(t.seed),
            Schedule::Full => TrainConfig::full(t.seed),
            Schedule::Custom => TrainConfig {
                stages: t.stages.clone(),
                ..TrainConfig::desk(t.seed)
            },
        };
        if let Some(e) = t.epochs_per_stage {
            cfg = cfg.with_epochs(e);
        }
        cfg.test_every = t.test_every;
        cfg
    }
}
