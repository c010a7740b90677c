//! Mini-batch training with a staged batch-size and learning-rate schedule.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tttk_core::datagen::Dataset;
use tttk_core::{Matrix, PolarField, PolarGrid, Real};

use crate::error::{NnError, Result};
use crate::graph::Graph;
use crate::loss::{mean_psnr, mse, mse_grad, psnr_batch, Psnr};
use crate::nets::Net;
use crate::optim::{Nadam, NadamConfig};
use crate::params::Params;
use crate::scalar::NnScalar;

/// Input/target pairs stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub input_len: usize,
    pub target_len: usize,
}

/// Polar nodal values as an `[N_theta, N_rho]` image.
pub fn polar_to_image<S: Real, T: NnScalar>(field: &PolarField<S>) -> Vec<T> {
    let (nt, nr) = (field.grid.n_theta(), field.grid.n_rho());
    let mut out = Vec::with_capacity(nt * nr);
    for j in 0..nt {
        for k in 0..nr {
            out.push(T::lit(field.at(j, k).as_f64()));
        }
    }
    out
}

/// Inverse of [`polar_to_image`].
pub fn image_to_polar<T: NnScalar>(image: &[T], grid: PolarGrid) -> Result<PolarField<T>> {
    let (nt, nr) = (grid.n_theta(), grid.n_rho());
    if image.len() != nt * nr {
        return Err(NnError::shape("polar image", nt * nr, image.len()));
    }
    let mut values = vec![T::zero(); nt * nr];
    for j in 0..nt {
        for k in 0..nr {
            values[grid.index(j, k)] = image[j * nr + k];
        }
    }
    Ok(PolarField::new(grid, values)?)
}

fn matrix_values<S: Real, T: NnScalar>(m: &Matrix<S>) -> impl Iterator<Item = T> + '_ {
    m.data.iter().map(|v| T::lit(v.as_f64()))
}

impl<T: NnScalar> Samples<T> {
    pub fn new(inputs: Vec<T>, targets: Vec<T>, input_len: usize, target_len: usize) -> Result<Self> {
        if input_len == 0 || target_len == 0 || inputs.len() % input_len != 0 {
            return Err(NnError::shape("samples", format!("multiple of {input_len}"), inputs.len()));
        }
        let n = inputs.len() / input_len;
        if targets.len() != n * target_len {
            return Err(NnError::shape("sample targets", n * target_len, targets.len()));
        }
        Ok(Self {
            inputs,
            targets,
            input_len,
            target_len,
        })
    }

    /// Sheared measurements to images, for the inverse net.
    pub fn inverse<S: Real>(ds: &Dataset<S>, range: Range<usize>) -> Result<Self> {
        let inputs = ds.inputs[range.clone()].iter().flat_map(matrix_values).collect();
        let targets = ds.labels[range].iter().flat_map(polar_to_image::<S, T>).collect();
        let (rows, cols) = ds.inputs[0].shape();
        Self::new(inputs, targets, rows * cols, ds.grids.polar.len())
    }

    /// Images to sheared measurements, for the forward net.
    pub fn forward<S: Real>(fields: &[PolarField<S>], data: &[Matrix<S>]) -> Result<Self> {
        if fields.is_empty() || fields.len() != data.len() {
            return Err(NnError::shape("forward samples", fields.len(), data.len()));
        }
        let inputs = fields.iter().flat_map(polar_to_image::<S, T>).collect();
        let targets = data.iter().flat_map(matrix_values).collect();
        let (rows, cols) = data[0].shape();
        Self::new(inputs, targets, fields[0].grid.len(), rows * cols)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_len
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[T] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    pub fn target(&self, i: usize) -> &[T] {
        &self.targets[i * self.target_len..(i + 1) * self.target_len]
    }

    fn check_net(&self, net: &Net) -> Result<()> {
        let [a, b] = net.input_shape();
        let [c, d] = net.output_shape();
        if self.input_len != a * b || self.target_len != c * d {
            return Err(NnError::shape(
                "samples for network",
                format!("{}/{} values per sample", a * b, c * d),
                format!("{}/{}", self.input_len, self.target_len),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stages: Vec<Stage>,
    pub seed: u64,
    /// Evaluate test PSNR every this many epochs; 0 disables it.
    #[serde(default)]
    pub test_every: usize,
    #[serde(default)]
    pub nadam: NadamConfig,
}

impl TrainConfig {
    /// Batch doubles from `batch0` to `max_batch` at `lr0` (`batch_epochs`
    /// each), then the rate falls by `lr_factor` down to `lr_min`
    /// (`lr_epochs` each) at the largest batch.
    pub fn staged(
        batch0: usize,
        max_batch: usize,
        batch_epochs: usize,
        lr0: f64,
        lr_min: f64,
        lr_factor: f64,
        lr_epochs: usize,
        seed: u64,
    ) -> Self {
        let mut stages = Vec::new();
        let mut batch = batch0;
        loop {
            stages.push(Stage {
                batch,
                lr: lr0,
                epochs: batch_epochs,
            });
            if batch >= max_batch {
                break;
            }
            batch = (batch * 2).min(max_batch);
        }
        let mut k = 1;
        loop {
            let lr = lr0 / lr_factor.powi(k);
            if lr < lr_min * (1.0 - 1e-9) {
                break;
            }
            stages.push(Stage {
                batch,
                lr,
                epochs: lr_epochs,
            });
            k += 1;
        }
        Self {
            stages,
            seed,
            test_every: 0,
            nadam: NadamConfig::default(),
        }
    }

    /// Full-length schedule: batch 32 to 512 at 1e-3, then down to 1e-5
    /// by factors of sqrt(10).
    pub fn full(seed: u64) -> Self {
        Self::staged(32, 512, 100, 1e-3, 1e-5, 10f64.sqrt(), 50, seed)
    }

    /// Batch 32 to 128 at 1e-3, then 10^-3.5 and 1e-4; 20 epochs per stage.
    pub fn desk(seed: u64) -> Self {
        Self::staged(32, 128, 20, 1e-3, 1e-4, 10f64.sqrt(), 20, seed)
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        for s in &mut self.stages {
            s.epochs = epochs;
        }
        self
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    pub fn validate(&self, n_train: usize) -> Result<()> {
        for s in &self.stages {
            if !(s.lr > 0.0 && s.lr.is_finite()) || s.batch == 0 || s.batch > n_train {
                return Err(NnError::InvalidSpec(format!(
                    "stage {s:?} needs lr > 0 and 1 <= batch <= {n_train}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(default)]
    pub test_psnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Runs the network over all inputs in chunks of `batch`.
pub fn predict<T: NnScalar>(net: &Net, params: &Params<T>, inputs: &[T], batch: usize) -> Result<Vec<T>> {
    let [a, b] = net.input_shape();
    let [c, d] = net.output_shape();
    let per = a * b;
    if inputs.len() % per != 0 {
        return Err(NnError::shape("prediction inputs", format!("multiple of {per}"), inputs.len()));
    }
    let mut out = Vec::with_capacity(inputs.len() / per * c * d);
    for chunk in inputs.chunks(per * batch.max(1)) {
        out.extend(net.forward(params, chunk, chunk.len() / per)?);
    }
    Ok(out)
}

/// Mean squared error over a whole sample set.
pub fn evaluate_loss<T: NnScalar>(net: &Net, params: &Params<T>, samples: &Samples<T>, batch: usize) -> Result<f64> {
    samples.check_net(net)?;
    let pred = predict(net, params, &samples.inputs, batch)?;
    mse(&pred, &samples.targets)
}

/// Per-sample PSNR over a sample set; `None` for constant targets.
pub fn evaluate_psnr<T: NnScalar>(
    net: &Net,
    params: &Params<T>,
    samples: &Samples<T>,
    batch: usize,
) -> Result<Vec<Option<Psnr>>> {
    samples.check_net(net)?;
    let pred = predict(net, params, &samples.inputs, batch)?;
    psnr_batch(&pred, &samples.targets, samples.target_len)
}

const EVAL_BATCH: usize = 64;

/// One gradient step on the given sample indices; returns the batch loss.
pub fn batch_step<T: NnScalar>(
    net: &Net,
    params: &mut Params<T>,
    opt: &mut Nadam<T>,
    samples: &Samples<T>,
    indices: &[usize],
    lr: f64,
) -> Result<f64> {
    let [a, b] = net.input_shape();
    let mut x = Vec::with_capacity(indices.len() * samples.input_len);
    let mut t = Vec::with_capacity(indices.len() * samples.target_len);
    for &i in indices {
        x.extend_from_slice(samples.input(i));
        t.extend_from_slice(samples.target(i));
    }
    let grads = {
        let mut g = Graph::new(&*params);
        let xv = g.input(vec![indices.len(), a, b], x)?;
        let y = net.build(&mut g, xv)?;
        let loss = mse(g.value(y), &t)?;
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss {
                epoch: 0,
                batch: indices.len(),
                lr,
            });
        }
        let seed = mse_grad(g.value(y), &t)?;
        (g.backward(y, &seed)?, loss)
    };
    opt.step(params, &grads.0, lr)?;
    Ok(grads.1)
}

/// Trains `params` in place. `on_epoch` sees every finished epoch.
pub fn train<T: NnScalar>(
    net: &Net,
    params: &mut Params<T>,
    train: &Samples<T>,
    test: Option<&Samples<T>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    train.check_net(net)?;
    if let Some(t) = test {
        t.check_net(net)?;
    }
    cfg.validate(train.len())?;
    params.check_layout(net.layout())?;

    let mut history = History {
        initial_train_loss: evaluate_loss(net, params, train, EVAL_BATCH)?,
        ..History::default()
    };
    let mut opt = Nadam::new(params, cfg.nadam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch = 0;
    for stage in &cfg.stages {
        for _ in 0..stage.epochs {
            epoch += 1;
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for idx in order.chunks(stage.batch) {
                let loss = batch_step(net, params, &mut opt, train, idx, stage.lr).map_err(|e| match e {
                    NnError::NonFiniteLoss { batch, lr, .. } => NnError::NonFiniteLoss { epoch, batch, lr },
                    e => e,
                })?;
                total += loss * idx.len() as f64;
            }
            let test_psnr = match test {
                Some(t) if cfg.test_every > 0 && epoch % cfg.test_every == 0 => {
                    mean_psnr(&evaluate_psnr(net, params, t, EVAL_BATCH)?)
                }
                _ => None,
            };
            let record = EpochRecord {
                epoch,
                batch: stage.batch,
                lr: stage.lr,
                train_loss: total / train.len() as f64,
                test_psnr,
            };
            on_epoch(&record);
            history.epochs.push(record);
        }
    }
    history.final_train_loss = evaluate_loss(net, params, train, EVAL_BATCH)?;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_schedule_shape() {
        let c = TrainConfig::full(0);
        let batches: Vec<usize> = c.stages.iter().map(|s| s.batch).collect();
        assert_eq!(batches, [32, 64, 128, 256, 512, 512, 512, 512, 512]);
        let last = c.stages.last().unwrap();
        assert!((last.lr - 1e-5).abs() < 1e-15);
        assert_eq!(c.total_epochs(), 5 * 100 + 4 * 50);
    }

    #[test]
    fn desk_schedule_shape() {
        let c = TrainConfig::desk(0);
        let got: Vec<(usize, f64)> = c.stages.iter().map(|s| (s.batch, s.lr)).collect();
        let want = [(32, 1e-3), (64, 1e-3), (128, 1e-3), (128, 10f64.powf(-3.5)), (128, 1e-4)];
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-15);
        }
        assert_eq!(c.total_epochs(), 100);
    }

    #[test]
    fn image_layout_round_trip() {
        let grid = PolarGrid::new(8, 3).unwrap();
        let f = PolarField::from_fn(grid, |x: f64, y: f64| x + 2.0 * y);
        let img: Vec<f64> = polar_to_image(&f);
        assert_eq!(img[5 * 3 + 2], f.at(5, 2));
        assert_eq!(image_to_polar(&img, grid).unwrap(), f);
    }
}
