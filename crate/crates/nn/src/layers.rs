//! Convolution layer specifications bound to parameter blocks.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamKind, ParamLayout};
use crate::scalar::NnScalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Id,
    Relu,
}

impl Activation {
    fn relu(self) -> bool {
        self == Activation::Relu
    }
}

/// Periodic 1-D convolution along the first spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub window: usize,
    pub dilation: usize,
    pub activation: Activation,
}

impl Conv1dSpec {
    pub fn new(in_channels: usize, out_channels: usize, window: usize, activation: Activation) -> Self {
        Self {
            in_channels,
            out_channels,
            window,
            dilation: 1,
            activation,
        }
    }

    pub fn dilated(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.in_channels == 0 || self.out_channels == 0 || self.dilation == 0 {
            return Err(NnError::InvalidSpec(format!(
                "conv1d needs an odd window and positive sizes, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.window * self.in_channels * self.out_channels + self.out_channels
    }

    pub fn register(&self, layout: &mut ParamLayout, name: &str) -> Result<Conv1d> {
        self.validate()?;
        let fan_in = self.window * self.in_channels;
        let fan_out = self.window * self.out_channels;
        let weight = layout.register(
            format!("{name}.weight"),
            vec![self.window, self.in_channels, self.out_channels],
            ParamKind::Weight { fan_in, fan_out },
        );
        let bias = layout.register(format!("{name}.bias"), vec![self.out_channels], ParamKind::Bias);
        Ok(Conv1d {
            spec: *self,
            weight,
            bias,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1d {
    pub spec: Conv1dSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv1d {
    /// `x` is `[batch, n, in_channels]`.
    pub fn apply<T: NnScalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        g.conv1d(x, self.weight, self.bias, self.spec.dilation, self.spec.activation.relu())
    }
}

/// 2-D convolution, periodic along the first axis and zero padded along
/// the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub window: (usize, usize),
    pub activation: Activation,
}

impl Conv2dSpec {
    pub fn new(in_channels: usize, out_channels: usize, window: usize, activation: Activation) -> Self {
        Self {
            in_channels,
            out_channels,
            window: (window, window),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.0 % 2 == 0 || self.window.1 % 2 == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::InvalidSpec(format!(
                "conv2d needs odd windows and positive sizes, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.window.0 * self.window.1 * self.in_channels * self.out_channels + self.out_channels
    }

    pub fn register(&self, layout: &mut ParamLayout, name: &str) -> Result<Conv2d> {
        self.validate()?;
        let area = self.window.0 * self.window.1;
        let weight = layout.register(
            format!("{name}.weight"),
            vec![self.window.0, self.window.1, self.in_channels, self.out_channels],
            ParamKind::Weight {
                fan_in: area * self.in_channels,
                fan_out: area * self.out_channels,
            },
        );
        let bias = layout.register(format!("{name}.bias"), vec![self.out_channels], ParamKind::Bias);
        Ok(Conv2d {
            spec: *self,
            weight,
            bias,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub spec: Conv2dSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    /// `x` is `[batch, n0, n1, in_channels]`.
    pub fn apply<T: NnScalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        g.conv2d(x, self.weight, self.bias, self.spec.activation.relu())
    }
}

/// A chain of periodic 1-D convolutions, relu between layers and identity
/// at the end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvChain {
    pub layers: Vec<Conv1d>,
}

impl ConvChain {
    /// `widths` lists the channel count at every interface, input first.
    pub fn register(
        layout: &mut ParamLayout,
        name: &str,
        widths: &[usize],
        window: usize,
        dilation: usize,
    ) -> Result<Self> {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Id } else { Activation::Relu };
                Conv1dSpec::new(widths[i], widths[i + 1], window, act)
                    .dilated(dilation)
                    .register(layout, &format!("{name}.{i}"))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn apply<T: NnScalar>(&self, g: &mut Graph<'_, T>, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            x = l.apply(g, x)?;
        }
        Ok(x)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }
}
