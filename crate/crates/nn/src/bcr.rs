//! Multiscale block in the nonstandard wavelet form.
//!
//! The input is split level by level with undecimated orthonormal Haar
//! pairs. At level `l` (offset `p = 2^(l-1)`, dilation `2^l`) two local
//! chains act on the split:
//!
//! * the detail chain maps `(s_l, d_l)` to a detail correction,
//! * the smooth chain maps `d_l` to a smooth correction added after merging.
//!
//! The coarsest smooth part goes through a dense chain whose dilated window
//! covers the whole circle. Reconstruction merges from coarse to fine.
//! Every operation commutes with circular shifts.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::ConvChain;
use crate::params::ParamLayout;
use crate::scalar::NnScalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BcrSpec {
    pub channels: usize,
    /// Convolutions per local chain.
    pub layers: usize,
    pub levels: usize,
    /// Window of the per-level chains.
    pub window: usize,
}

impl BcrSpec {
    /// Uses the largest `L` with `2^L | n`.
    pub fn new(channels: usize, layers: usize, n: usize) -> Self {
        Self {
            channels,
            layers,
            levels: max_levels(n),
            window: 3,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.channels == 0 || self.layers == 0 || self.window % 2 == 0 {
            return Err(NnError::InvalidSpec(format!(
                "BCR needs positive channels and layers and an odd window, got {self:?}"
            )));
        }
        if n == 0 || self.levels >= usize::BITS as usize || n % (1 << self.levels) != 0 {
            return Err(NnError::InvalidSpec(format!(
                "BCR with {} levels needs 2^{} to divide the length {n}",
                self.levels, self.levels
            )));
        }
        Ok(())
    }

    /// Window of the coarsest dense chain for input length `n`.
    pub fn coarse_window(&self, n: usize) -> usize {
        n >> self.levels
    }

    /// Closed-form parameter count for input length `n`.
    pub fn param_count(&self, n: usize) -> usize {
        let (c, k, w) = (self.channels, self.layers, self.window);
        let conv = |w: usize, i: usize, o: usize| w * i * o + o;
        let detail = if k == 1 {
            conv(w, 2 * c, c)
        } else {
            (k - 1) * conv(w, 2 * c, 2 * c) + conv(w, 2 * c, c)
        };
        let smooth = if k == 1 {
            conv(w, c, c)
        } else {
            conv(w, c, 2 * c) + (k - 2) * conv(w, 2 * c, 2 * c) + conv(w, 2 * c, c)
        };
        self.levels * (detail + smooth) + k * conv(self.coarse_window(n), c, c)
    }
}

pub fn max_levels(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        n.trailing_zeros() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Level {
    detail: ConvChain,
    smooth: ConvChain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bcr {
    pub spec: BcrSpec,
    n: usize,
    levels: Vec<Level>,
    coarse: ConvChain,
}

impl Bcr {
    pub fn register(spec: BcrSpec, n: usize, layout: &mut ParamLayout, name: &str) -> Result<Self> {
        spec.validate(n)?;
        let c = spec.channels;
        let k = spec.layers;
        let hidden = |first: usize| {
            let mut w = vec![first];
            w.extend(std::iter::repeat(2 * c).take(k - 1));
            w.push(c);
            w
        };
        let levels = (1..=spec.levels)
            .map(|l| {
                let dilation = 1 << l;
                Ok(Level {
                    detail: ConvChain::register(layout, &format!("{name}.l{l}.detail"), &hidden(2 * c), spec.window, dilation)?,
                    smooth: ConvChain::register(layout, &format!("{name}.l{l}.smooth"), &hidden(c), spec.window, dilation)?,
                })
            })
            .collect::<Result<_>>()?;
        let coarse = ConvChain::register(
            layout,
            &format!("{name}.coarse"),
            &vec![c; k + 1],
            spec.coarse_window(n),
            1 << spec.levels,
        )?;
        Ok(Self {
            spec,
            n,
            levels,
            coarse,
        })
    }

    pub fn param_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| l.detail.param_count() + l.smooth.param_count())
            .sum::<usize>()
            + self.coarse.param_count()
    }

    /// `x` is `[batch, n, channels]`.
    pub fn apply<T: NnScalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let dims = g.dims(x);
        if dims.len() != 3 || dims[1] != self.n || dims[2] != self.spec.channels {
            return Err(NnError::shape(
                "BCR input",
                format!("[batch, {}, {}]", self.n, self.spec.channels),
                format!("{dims:?}"),
            ));
        }
        let mut s = x;
        let mut details = Vec::with_capacity(self.levels.len());
        let mut smooths = Vec::with_capacity(self.levels.len());
        for (i, level) in self.levels.iter().enumerate() {
            let p = 1 << i;
            let d = g.haar_diff(s, p)?;
            s = g.haar_sum(s, p)?;
            let both = g.concat(s, d)?;
            details.push(level.detail.apply(g, both)?);
            smooths.push(level.smooth.apply(g, d)?);
        }
        let mut y = self.coarse.apply(g, s)?;
        for i in (0..self.levels.len()).rev() {
            y = g.add(y, smooths[i])?;
            y = g.haar_merge(y, details[i], 1 << i)?;
        }
        Ok(y)
    }
}
