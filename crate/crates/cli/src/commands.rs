//! The subcommands as library functions. Each one loads its inputs, calls
//! the corresponding library routine and writes the result, so its output is
//! exactly what an in-process caller would compute.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use tttk_core::datagen::{generate_dataset, Dataset};
use tttk_core::eikonal::{outside_mask_apply, sweep_solve, SlownessField, TraveltimeField};
use tttk_core::linearized::{assemble_kernel, default_n_quad, LinearKernel};
use tttk_core::reconstruction::{fbp_invert, FbpConfig, Regularization};
use tttk_core::tensorfile::Tensor;
use tttk_core::{CartesianField, Constant, Dtype, Matrix, PolarField, PolarGrid, Real};
use tttk_nn::loss::{mean_psnr, psnr_batch};
use tttk_nn::train::{image_to_polar, polar_to_image, predict as run_net, EpochRecord};
use tttk_nn::{Checkpoint, History, Net, NnScalar, Psnr, Samples};

use crate::config::{Precision, RunConfig};
use crate::render;

const PREDICT_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    #[default]
    Test,
    All,
}

impl Split {
    pub fn range<T: Real>(self, ds: &Dataset<T>) -> Range<usize> {
        match self {
            Split::Train => ds.train_range(),
            Split::Test => ds.test_range(),
            Split::All => 0..ds.len(),
        }
    }
}

/// Where sheared measurements come from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// A `[N_s, N_s]` or `[n, N_s, N_s]` tensor.
    File(PathBuf),
    Dataset { dir: PathBuf, split: Split },
}

fn mismatch(what: &str, name: &str, found: usize, expected: usize) -> anyhow::Error {
    anyhow::anyhow!("{what}: {name} is {found} but {expected} was expected")
}

/// Checks the dataset grids against the configuration, naming the first
/// dimension that differs.
pub fn check_dataset<T>(cfg: &RunConfig, ds: &Dataset<T>, dir: &Path) -> Result<()> {
    let what = format!("dataset {}", dir.display());
    let g = &ds.grids;
    for (name, found, expected) in [
        ("n_theta", g.polar.n_theta(), cfg.grid.n_theta),
        ("n_rho", g.polar.n_rho(), cfg.grid.n_rho),
        ("n_sources", g.ring.n(), cfg.grid.n_sources),
    ] {
        if found != expected {
            return Err(mismatch(&what, name, found, expected));
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset<f64>> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// Splits a rank-2 or rank-3 tensor into its trailing 2-d slices after
/// checking their dimensions.
fn slices<T: Real>(t: &Tensor<T>, path: &Path, names: [&str; 2], expected: [usize; 2]) -> Result<Vec<Vec<T>>> {
    let what = format!("tensor {}", path.display());
    let (n, tail) = match t.dims[..] {
        [a, b] => (1, [a, b]),
        [n, a, b] => (n, [a, b]),
        _ => bail!("{what}: expected rank 2 or 3, found dims {:?}", t.dims),
    };
    for i in 0..2 {
        if tail[i] != expected[i] {
            return Err(mismatch(&what, names[i], tail[i], expected[i]));
        }
    }
    let len = expected[0] * expected[1];
    Ok((0..n).map(|i| t.data[i * len..(i + 1) * len].to_vec()).collect())
}

/// Polar fields from a `[n_rho, n_theta]` or `[n, n_rho, n_theta]` tensor.
pub fn load_fields(path: &Path, grid: PolarGrid) -> Result<Vec<PolarField<f64>>> {
    let t = Tensor::<f64>::load_converted(path)?;
    slices(&t, path, ["n_rho", "n_theta"], [grid.n_rho(), grid.n_theta()])?
        .into_iter()
        .map(|v| Ok(PolarField::new(grid, v)?))
        .collect()
}

/// Sheared measurements from a `[N_s, N_s]` or `[n, N_s, N_s]` tensor.
pub fn load_measurements(path: &Path, n_sources: usize) -> Result<Vec<Matrix<f64>>> {
    let t = Tensor::<f64>::load_converted(path)?;
    slices(&t, path, ["sources", "offsets"], [n_sources, n_sources])?
        .into_iter()
        .map(|v| Ok(Matrix::from_vec(n_sources, n_sources, v)?))
        .collect()
}

impl DataSource {
    pub fn measurements(&self, cfg: &RunConfig) -> Result<Vec<Matrix<f64>>> {
        match self {
            DataSource::File(p) => load_measurements(p, cfg.grid.n_sources),
            DataSource::Dataset { dir, split } => {
                let ds = load_dataset(dir)?;
                check_dataset(cfg, &ds, dir)?;
                Ok(ds.inputs[split.range(&ds)].to_vec())
            }
        }
    }
}

fn stack_fields<T: Real>(fields: &[PolarField<T>]) -> Result<Tensor<T>> {
    let items: Vec<Tensor<T>> = fields.iter().map(Tensor::from_polar).collect();
    Ok(Tensor::stack(&items)?)
}

fn stack_matrices<T: Real>(data: &[Matrix<T>]) -> Result<Tensor<T>> {
    let items: Vec<Tensor<T>> = data.iter().map(Tensor::from_matrix).collect();
    Ok(Tensor::stack(&items)?)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// The slowness for `solve`: unit slowness when no file is given, otherwise
/// an `[n, n]` tensor (row `iy`, column `ix`) on the configured grid.
pub fn load_slowness(cfg: &RunConfig, path: Option<&Path>) -> Result<SlownessField<f64>> {
    let grid = cfg.cartesian()?;
    let outside = cfg.solver.outside_slowness;
    let Some(path) = path else {
        return Ok(SlownessField::rasterize(grid, &Constant(1.0), 0.0, outside)?);
    };
    let t = Tensor::<f64>::load_converted(path)?;
    let what = format!("slowness {}", path.display());
    let [ny, nx] = t.dims[..] else {
        bail!("{what}: expected rank 2, found dims {:?}", t.dims);
    };
    if ny != grid.n() {
        return Err(mismatch(&what, "rows", ny, grid.n()));
    }
    if nx != grid.n() {
        return Err(mismatch(&what, "columns", nx, grid.n()));
    }
    let m = SlownessField::new(CartesianField::new(grid, t.data)?).with_context(|| what.clone())?;
    Ok(outside_mask_apply(&m, outside).with_context(|| what)?)
}

/// Traveltimes from the source at `angle`; writes the `[n, n]` tensor and a
/// grey-level image.
pub fn solve(cfg: &RunConfig, slowness: Option<&Path>, angle: f64, out: &Path, image: &Path) -> Result<TraveltimeField<f64>> {
    let m = load_slowness(cfg, slowness)?;
    let u = sweep_solve(&m, angle, &cfg.sweep())?;
    let n = u.field.grid.n();
    create_parent(out)?;
    Tensor::new(vec![n, n], u.field.values.clone())?.save(out)?;
    create_parent(image)?;
    render::save_png(&render::render_traveltime(&u.field), image)?;
    Ok(u)
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<Dataset<f64>> {
    let ds = generate_dataset(&cfg.dataset_spec(), &cfg.grids()?)?;
    ds.save(out)?;
    Ok(ds)
}

pub fn kernel(cfg: &RunConfig) -> Result<LinearKernel<f64>> {
    let polar = cfg.polar()?;
    let n_quad = cfg.kernel.n_quad.unwrap_or_else(|| default_n_quad(polar));
    Ok(assemble_kernel(polar, cfg.ring()?, n_quad)?)
}

/// Assembles the kernel and writes it as a dense `[N_h, n_rho, n_theta]`
/// tensor; with `apply = (fields, out)` also maps the fields to data.
pub fn linearize(cfg: &RunConfig, out: &Path, apply: Option<(&Path, &Path)>) -> Result<LinearKernel<f64>> {
    let k = kernel(cfg)?;
    create_parent(out)?;
    Tensor::new(k.shape().to_vec(), k.dense().to_vec())?.save(out)?;
    if let Some((fields, data_out)) = apply {
        let fields = load_fields(fields, k.grid())?;
        let data = fields.iter().map(|f| k.apply(f)).collect::<tttk_core::Result<Vec<_>>>()?;
        create_parent(data_out)?;
        stack_matrices(&data)?.save(data_out)?;
    }
    Ok(k)
}

/// Regularized inversions of every measurement. The ridge parameter is
/// resolved once and shared by all samples.
pub fn fbp_fields(cfg: &RunConfig, k: &LinearKernel<f64>, data: &[Matrix<f64>]) -> Result<Vec<PolarField<f64>>> {
    let base = cfg.fbp();
    let eps = base.epsilon(k)?;
    let fixed = FbpConfig {
        regularization: Regularization::Absolute(eps),
        ..base
    };
    let out = data
        .par_iter()
        .enumerate()
        .map(|(i, d)| fbp_invert(k, d, &fixed).with_context(|| format!("sample {i}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// Writes `[n, n_rho, n_theta]` reconstructions.
pub fn fbp(cfg: &RunConfig, source: &DataSource, out: &Path) -> Result<Vec<PolarField<f64>>> {
    let data = source.measurements(cfg)?;
    ensure!(!data.is_empty(), "no measurements to invert");
    let fields = fbp_fields(cfg, &kernel(cfg)?, &data)?;
    create_parent(out)?;
    stack_fields(&fields)?.save(out)?;
    Ok(fields)
}

fn train_typed<T: NnScalar>(
    cfg: &RunConfig,
    ds: &Dataset<f64>,
    out: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    let arch = cfg.architecture();
    let net = Net::new(arch)?;
    let train = Samples::<T>::inverse(ds, ds.train_range())?;
    let test = if ds.test_range().is_empty() {
        None
    } else {
        Some(Samples::<T>::inverse(ds, ds.test_range())?)
    };
    let mut params = net.init::<T>(cfg.net.init_seed);
    let history = tttk_nn::train::train(&net, &mut params, &train, test.as_ref(), &cfg.train_config(), on_epoch)?;
    Checkpoint {
        arch,
        init_seed: cfg.net.init_seed,
        history: Some(history.clone()),
        params,
    }
    .save(out)?;
    Ok(history)
}

/// Trains the inverse network on the training split and saves a checkpoint
/// directory with the loss history.
pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path, on_epoch: impl FnMut(&EpochRecord)) -> Result<History> {
    let ds = load_dataset(dataset)?;
    check_dataset(cfg, &ds, dataset)?;
    if cfg.grid.n_sources != cfg.grid.n_theta {
        return Err(mismatch("network input", "n_sources", cfg.grid.n_sources, cfg.grid.n_theta));
    }
    match cfg.train.precision {
        Precision::F32 => train_typed::<f32>(cfg, &ds, out, on_epoch),
        Precision::F64 => train_typed::<f64>(cfg, &ds, out, on_epoch),
    }
}

fn checkpoint_dtype(dir: &Path) -> Result<Dtype> {
    let path = dir.join(tttk_nn::checkpoint::PARAMS_FILE);
    Ok(Tensor::<f64>::peek(&path)?.0)
}

fn predict_typed<T: NnScalar>(dir: &Path, data: &[Matrix<f64>]) -> Result<Tensor<T>> {
    let ckpt = Checkpoint::<T>::load(dir)?;
    let net = Net::new(ckpt.arch)?;
    let [ns, nh] = net.input_shape();
    let [nt, nr] = net.output_shape();
    let what = format!("measurements for checkpoint {}", dir.display());
    let (rows, cols) = data[0].shape();
    if rows != ns {
        return Err(mismatch(&what, "sources", rows, ns));
    }
    if cols != nh {
        return Err(mismatch(&what, "offsets", cols, nh));
    }
    let inputs: Vec<T> = data.iter().flat_map(|m| m.data.iter().map(|v| T::lit(*v))).collect();
    let pred = run_net(&net, &ckpt.params, &inputs, PREDICT_BATCH)?;
    let grid = PolarGrid::new(nt, nr)?;
    let fields = pred
        .chunks_exact(nt * nr)
        .map(|img| Ok(image_to_polar(img, grid)?))
        .collect::<Result<Vec<_>>>()?;
    stack_fields(&fields)
}

/// Runs a trained inverse network; writes `[n, n_rho, n_theta]` in the
/// checkpoint's precision.
pub fn predict(cfg: &RunConfig, checkpoint: &Path, source: &DataSource, out: &Path) -> Result<()> {
    let data = source.measurements(cfg)?;
    ensure!(!data.is_empty(), "no measurements to predict from");
    create_parent(out)?;
    match checkpoint_dtype(checkpoint)? {
        Dtype::F32 => predict_typed::<f32>(checkpoint, &data)?.save(out)?,
        Dtype::F64 => predict_typed::<f64>(checkpoint, &data)?.save(out)?,
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Dataset index of each evaluated sample.
    pub indices: Vec<usize>,
    /// `None` where the label is constant.
    pub psnr: Vec<Option<Psnr>>,
    pub mean: Option<f64>,
}

impl EvalReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("sample,psnr_db\n");
        for (i, p) in self.indices.iter().zip(&self.psnr) {
            let v = match p {
                Some(p) => p.to_string(),
                None => "degenerate".into(),
            };
            writeln!(s, "{i},{v}").unwrap();
        }
        s
    }
}

fn eval_typed<T: NnScalar>(pred: &Path, labels: &[PolarField<f64>], grid: PolarGrid) -> Result<Vec<Option<Psnr>>> {
    let t = Tensor::<T>::load(pred)?;
    let preds = slices(&t, pred, ["n_rho", "n_theta"], [grid.n_rho(), grid.n_theta()])?;
    if preds.len() != labels.len() {
        return Err(mismatch(&format!("predictions {}", pred.display()), "samples", preds.len(), labels.len()));
    }
    // image order, as during training
    let mut p = Vec::with_capacity(t.data.len());
    let mut l = Vec::with_capacity(t.data.len());
    for (v, label) in preds.into_iter().zip(labels) {
        p.extend(polar_to_image::<T, T>(&PolarField::new(grid, v)?));
        l.extend(polar_to_image::<f64, T>(label));
    }
    Ok(psnr_batch(&p, &l, grid.len())?)
}

/// PSNR of stored predictions against the dataset labels of `split`, computed
/// in the precision of the prediction file.
pub fn eval(cfg: &RunConfig, pred: &Path, dataset: &Path, split: Split) -> Result<EvalReport> {
    let ds = load_dataset(dataset)?;
    check_dataset(cfg, &ds, dataset)?;
    let range = split.range(&ds);
    let labels = &ds.labels[range.clone()];
    let grid = ds.grids.polar;
    let psnr = match Tensor::<f64>::peek(pred)?.0 {
        Dtype::F32 => eval_typed::<f32>(pred, labels, grid)?,
        Dtype::F64 => eval_typed::<f64>(pred, labels, grid)?,
    };
    Ok(EvalReport {
        indices: range.collect(),
        mean: mean_psnr(&psnr),
        psnr,
    })
}

pub struct RenderRequest<'a> {
    pub field: &'a Path,
    pub index: usize,
    /// Another field tensor drawn to the left, same index.
    pub reference: Option<&'a Path>,
    /// Dataset labels drawn to the left; `index` counts within `split`.
    pub dataset: Option<(&'a Path, Split)>,
    pub size: u32,
    pub scale: Option<f64>,
    pub out: &'a Path,
}

fn pick(fields: Vec<PolarField<f64>>, index: usize, path: &Path) -> Result<PolarField<f64>> {
    let n = fields.len();
    fields
        .into_iter()
        .nth(index)
        .with_context(|| format!("{}: index {index} out of range for {n} fields", path.display()))
}

/// Draws a stored field (and optionally its reference, on the left) on the
/// unit disk; writes the PNG and a JSON sidecar with the colour scale.
pub fn render_field(cfg: &RunConfig, req: &RenderRequest) -> Result<render::Sidecar> {
    let grid = cfg.polar()?;
    let field = pick(load_fields(req.field, grid)?, req.index, req.field)?;
    let reference = match (req.reference, req.dataset) {
        (Some(_), Some(_)) => bail!("give either a reference tensor or a dataset, not both"),
        (Some(p), None) => Some(pick(load_fields(p, grid)?, req.index, p)?),
        (None, Some((dir, split))) => {
            let ds = load_dataset(dir)?;
            check_dataset(cfg, &ds, dir)?;
            let range = split.range(&ds);
            let labels = ds.labels[range].to_vec();
            Some(pick(labels, req.index, dir)?)
        }
        (None, None) => None,
    };
    let mut panels = Vec::new();
    if let Some(r) = &reference {
        panels.push(("reference", r));
    }
    panels.push(("field", &field));
    let (img, side) = render::render_panels(&panels, req.size, req.scale);
    create_parent(req.out)?;
    render::save_png(&img, req.out)?;
    render::save_sidecar(&side, req.out)?;
    Ok(side)
}

/// Exit status for a failed command: 2 when a numerical method failed
/// anywhere in the cause chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numerical = err.chain().any(|e| {
        e.downcast_ref::<tttk_core::Error>().is_some_and(|e| e.is_numerical())
            || e.downcast_ref::<tttk_nn::NnError>().is_some_and(|e| e.is_numerical())
    });
    if numerical {
        2
    } else {
        1
    }
}
