//! Named parameter blocks, Xavier initialisation and gradient buffers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::scalar::NnScalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The shapes of every parameter block a model reads, in registration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamInfo>,
}

impl ParamLayout {
    pub fn register(&mut self, name: impl Into<String>, dims: Vec<usize>, kind: ParamKind) -> ParamId {
        self.blocks.push(ParamInfo {
            name: name.into(),
            dims,
            kind,
        });
        ParamId(self.blocks.len() - 1)
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.blocks.iter().map(ParamInfo::len).sum()
    }
}

/// Parameter values laid out as in a [`ParamLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub layout: ParamLayout,
    pub values: Vec<Vec<T>>,
}

impl<T: NnScalar> Params<T> {
    pub fn zeros(layout: &ParamLayout) -> Self {
        Self {
            values: layout.blocks.iter().map(|b| vec![T::zero(); b.len()]).collect(),
            layout: layout.clone(),
        }
    }

    /// Weights `~ U(-sqrt(6 / (fan_in + fan_out)), +sqrt(...))`, biases zero.
    pub fn xavier(layout: &ParamLayout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = layout
            .blocks
            .iter()
            .map(|b| match b.kind {
                ParamKind::Weight { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..b.len())
                        .map(|_| T::lit(rng.gen_range(-limit..limit)))
                        .collect()
                }
                ParamKind::Bias => vec![T::zero(); b.len()],
            })
            .collect();
        Self {
            layout: layout.clone(),
            values,
        }
    }

    /// Every entry, weights and biases alike, `~ U(-scale, scale)`.
    pub fn uniform(layout: &ParamLayout, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = layout
            .blocks
            .iter()
            .map(|b| (0..b.len()).map(|_| T::lit(rng.gen_range(-scale..scale))).collect())
            .collect();
        Self {
            layout: layout.clone(),
            values,
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub fn count(&self) -> usize {
        self.layout.count()
    }

    /// Same values in another precision.
    pub fn cast<U: NnScalar>(&self) -> Params<U> {
        Params {
            layout: self.layout.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| U::lit(x.as_f64())).collect())
                .collect(),
        }
    }

    pub fn check_layout(&self, layout: &ParamLayout) -> Result<()> {
        if &self.layout != layout {
            return Err(NnError::shape(
                "parameters",
                format!("{} blocks / {} values", layout.blocks.len(), layout.count()),
                format!("{} blocks / {} values", self.layout.blocks.len(), self.layout.count()),
            ));
        }
        Ok(())
    }
}

/// Gradient buffers shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: NnScalar> Grads<T> {
    pub fn zeros(layout: &ParamLayout) -> Self {
        Self {
            values: layout.blocks.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.values[id.0]
    }
}
