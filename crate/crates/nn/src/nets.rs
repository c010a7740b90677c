//! The forward and inverse networks.

use serde::{Deserialize, Serialize};

use crate::bcr::{Bcr, BcrSpec};
use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Activation, Conv1d, Conv1dSpec, Conv2d, Conv2dSpec};
use crate::params::{ParamLayout, Params};
use crate::scalar::NnScalar;

/// Measurement-to-image network. Input `[N_s, N_h]`, output `[N_theta, N_rho]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseNetSpec {
    pub n_s: usize,
    pub n_h: usize,
    pub n_theta: usize,
    pub n_rho: usize,
    pub c: usize,
    pub c2: usize,
    pub w: usize,
    pub n_cnn: usize,
    pub n_cnn2: usize,
    pub bcr_window: usize,
    /// Defaults to the largest admissible level count.
    #[serde(default)]
    pub levels: Option<usize>,
}

impl InverseNetSpec {
    /// Full-size configuration at 160 angular cells.
    pub fn full() -> Self {
        Self::with_sizes(160, 80, 30, 6, 5)
    }

    pub fn with_sizes(n_theta: usize, n_rho: usize, c: usize, n_cnn: usize, n_cnn2: usize) -> Self {
        Self {
            n_s: n_theta,
            n_h: n_theta,
            n_theta,
            n_rho,
            c,
            c2: c,
            w: 3,
            n_cnn,
            n_cnn2,
            bcr_window: 3,
            levels: None,
        }
    }

    pub fn bcr(&self) -> BcrSpec {
        let mut b = BcrSpec::new(self.c, self.n_cnn, self.n_theta);
        b.window = self.bcr_window;
        if let Some(l) = self.levels {
            b.levels = l;
        }
        b
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_s, self.n_h, self.n_theta, self.n_rho, self.c, self.c2, self.w, self.n_cnn, self.n_cnn2];
        if counts.contains(&0) {
            return Err(NnError::InvalidSpec(format!("all counts must be positive: {self:?}")));
        }
        if self.n_s != self.n_theta {
            return Err(NnError::InvalidSpec(format!(
                "the inverse net needs N_s = N_theta, got {} and {}",
                self.n_s, self.n_theta
            )));
        }
        self.bcr().validate(self.n_theta)
    }

    pub fn param_count(&self) -> usize {
        let conv2 = |i: usize, o: usize| Conv2dSpec::new(i, o, self.w, Activation::Id).param_count();
        let stack = if self.n_cnn2 == 1 {
            conv2(1, 1)
        } else {
            conv2(1, self.c2) + (self.n_cnn2 - 2) * conv2(self.c2, self.c2) + conv2(self.c2, 1)
        };
        (self.n_h * self.c + self.c) + self.bcr().param_count(self.n_theta) + (self.c * self.n_rho + self.n_rho) + stack
    }
}

/// Image-to-measurement network. Input `[N_theta, N_rho]`, output `[N_theta, N_h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardNetSpec {
    pub n_theta: usize,
    pub n_rho: usize,
    pub n_h: usize,
    pub c: usize,
    pub n_cnn: usize,
    pub bcr_window: usize,
    #[serde(default)]
    pub levels: Option<usize>,
}

impl ForwardNetSpec {
    pub fn with_sizes(n_theta: usize, n_rho: usize, c: usize, n_cnn: usize) -> Self {
        Self {
            n_theta,
            n_rho,
            n_h: n_theta,
            c,
            n_cnn,
            bcr_window: 3,
            levels: None,
        }
    }

    pub fn bcr(&self) -> BcrSpec {
        let mut b = BcrSpec::new(self.c, self.n_cnn, self.n_theta);
        b.window = self.bcr_window;
        if let Some(l) = self.levels {
            b.levels = l;
        }
        b
    }

    pub fn validate(&self) -> Result<()> {
        if [self.n_theta, self.n_rho, self.n_h, self.c, self.n_cnn].contains(&0) {
            return Err(NnError::InvalidSpec(format!("all counts must be positive: {self:?}")));
        }
        self.bcr().validate(self.n_theta)
    }

    pub fn param_count(&self) -> usize {
        (self.n_rho * self.c + self.c) + self.bcr().param_count(self.n_theta) + (self.c * self.n_h + self.n_h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "net", rename_all = "lowercase")]
pub enum Architecture {
    Inverse(InverseNetSpec),
    Forward(ForwardNetSpec),
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Inverse(s) => s.validate(),
            Architecture::Forward(s) => s.validate(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Inverse(s) => s.param_count(),
            Architecture::Forward(s) => s.param_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Body {
    Inverse {
        stack: Vec<Conv2d>,
    },
    Forward,
}

/// A network with its parameter layout fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Net {
    pub arch: Architecture,
    layout: ParamLayout,
    lift: Conv1d,
    bcr: Bcr,
    project: Conv1d,
    body: Body,
}

impl Net {
    pub fn new(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut layout = ParamLayout::default();
        match arch {
            Architecture::Inverse(s) => {
                let lift = Conv1dSpec::new(s.n_h, s.c, 1, Activation::Id).register(&mut layout, "lift")?;
                let bcr = Bcr::register(s.bcr(), s.n_theta, &mut layout, "bcr")?;
                let project = Conv1dSpec::new(s.c, s.n_rho, 1, Activation::Id).register(&mut layout, "project")?;
                let mut stack = Vec::with_capacity(s.n_cnn2);
                for i in 0..s.n_cnn2 {
                    let last = i + 1 == s.n_cnn2;
                    let cin = if i == 0 { 1 } else { s.c2 };
                    let (cout, act) = if last { (1, Activation::Id) } else { (s.c2, Activation::Relu) };
                    stack.push(Conv2dSpec::new(cin, cout, s.w, act).register(&mut layout, &format!("filter.{i}"))?);
                }
                Ok(Self {
                    arch,
                    layout,
                    lift,
                    bcr,
                    project,
                    body: Body::Inverse { stack },
                })
            }
            Architecture::Forward(s) => {
                let lift = Conv1dSpec::new(s.n_rho, s.c, 1, Activation::Id).register(&mut layout, "lift")?;
                let bcr = Bcr::register(s.bcr(), s.n_theta, &mut layout, "bcr")?;
                let project = Conv1dSpec::new(s.c, s.n_h, 1, Activation::Id).register(&mut layout, "project")?;
                Ok(Self {
                    arch,
                    layout,
                    lift,
                    bcr,
                    project,
                    body: Body::Forward,
                })
            }
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.count()
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> [usize; 2] {
        match self.arch {
            Architecture::Inverse(s) => [s.n_s, s.n_h],
            Architecture::Forward(s) => [s.n_theta, s.n_rho],
        }
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> [usize; 2] {
        match self.arch {
            Architecture::Inverse(s) => [s.n_theta, s.n_rho],
            Architecture::Forward(s) => [s.n_theta, s.n_h],
        }
    }

    pub fn init<T: NnScalar>(&self, seed: u64) -> Params<T> {
        Params::xavier(&self.layout, seed)
    }

    /// Records the network on `g`; `x` is `[batch, a, b]` with `[a, b]`
    /// the input shape.
    pub fn build<T: NnScalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        g.params().check_layout(&self.layout)?;
        let [a, b] = self.input_shape();
        let dims = g.dims(x);
        if dims.len() != 3 || dims[1] != a || dims[2] != b {
            return Err(NnError::shape("network input", format!("[batch, {a}, {b}]"), format!("{dims:?}")));
        }
        let batch = dims[0];
        let h = self.lift.apply(g, x)?;
        let h = self.bcr.apply(g, h)?;
        let h = self.project.apply(g, h)?;
        match &self.body {
            Body::Forward => Ok(h),
            Body::Inverse { stack } => {
                let [nt, nr] = self.output_shape();
                let mut h = g.reshape(h, vec![batch, nt, nr, 1])?;
                for conv in stack {
                    h = conv.apply(g, h)?;
                }
                g.reshape(h, vec![batch, nt, nr])
            }
        }
    }

    /// Evaluates a batch stored contiguously as `[batch, a, b]`.
    pub fn forward<T: NnScalar>(&self, params: &Params<T>, input: &[T], batch: usize) -> Result<Vec<T>> {
        let [a, b] = self.input_shape();
        let mut g = Graph::new(params);
        let x = g.input(vec![batch, a, b], input.to_vec())?;
        let y = self.build(&mut g, x)?;
        Ok(g.into_value(y))
    }
}
