//! Define-by-run tape over a fixed operation vocabulary.
//!
//! Tensors are channels-last: `[batch, n, channels]` for signals on the
//! circle and `[batch, n_theta, n_rho, channels]` for polar images. The
//! first spatial axis is always periodic.

use crate::error::{NnError, Result};
use crate::params::{Grads, ParamId, Params};
use crate::scalar::NnScalar;

/// Handle to a tape entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Sentinel in a tap table: the tap falls into zero padding.
const PAD: u32 = u32::MAX;

/// For every output site, the input site read by each tap.
#[derive(Clone, Debug)]
struct Taps {
    sites: usize,
    taps: usize,
    index: Vec<u32>,
}

impl Taps {
    fn periodic_1d(n: usize, window: usize, dilation: usize) -> Self {
        let c = (window / 2) as isize;
        let mut index = Vec::with_capacity(n * window);
        for i in 0..n {
            for t in 0..window {
                let j = (i as isize + (t as isize - c) * dilation as isize).rem_euclid(n as isize);
                index.push(j as u32);
            }
        }
        Self {
            sites: n,
            taps: window,
            index,
        }
    }

    /// Periodic along the first axis, zero padded along the second.
    fn mixed_2d(n0: usize, n1: usize, window: (usize, usize)) -> Self {
        let (c0, c1) = ((window.0 / 2) as isize, (window.1 / 2) as isize);
        let mut index = Vec::with_capacity(n0 * n1 * window.0 * window.1);
        for i in 0..n0 {
            for j in 0..n1 {
                for t0 in 0..window.0 {
                    let ii = (i as isize + t0 as isize - c0).rem_euclid(n0 as isize) as usize;
                    for t1 in 0..window.1 {
                        let jj = j as isize + t1 as isize - c1;
                        index.push(if (0..n1 as isize).contains(&jj) {
                            (ii * n1 + jj as usize) as u32
                        } else {
                            PAD
                        });
                    }
                }
            }
        }
        Self {
            sites: n0 * n1,
            taps: window.0 * window.1,
            index,
        }
    }

    fn is_identity(&self) -> bool {
        self.taps == 1 && self.index.iter().enumerate().all(|(i, &j)| j as usize == i)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Conv {
        x: usize,
        w: ParamId,
        b: ParamId,
        taps: Taps,
        cin: usize,
        cout: usize,
        relu: bool,
    },
    HaarSum { x: usize, p: usize },
    HaarDiff { x: usize, p: usize },
    HaarMerge { a: usize, b: usize, p: usize },
    Add { a: usize, b: usize },
    Concat { a: usize, b: usize },
    Reshape { x: usize },
}

#[derive(Clone, Debug)]
struct Node<T> {
    dims: Vec<usize>,
    value: Vec<T>,
    op: Op,
}

pub struct Graph<'p, T> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
}

/// Rows of the im2col buffer are processed in chunks of whole samples so
/// that the buffer stays below this many elements.
const CHUNK_ELEMENTS: usize = 1 << 18;

fn samples_per_chunk(sites: usize, width: usize) -> usize {
    (CHUNK_ELEMENTS / (sites * width).max(1)).max(1)
}

fn frac_1_sqrt_2<T: NnScalar>() -> T {
    T::FRAC_1_SQRT_2()
}

impl<'p, T: NnScalar> Graph<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p Params<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].dims
    }

    pub fn into_value(mut self, v: Var) -> Vec<T> {
        std::mem::take(&mut self.nodes[v.0].value)
    }

    /// Sign pattern of every relu output on the tape. Two evaluations with
    /// equal patterns lie on the same linear piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Conv { relu: true, .. }))
            .flat_map(|n| n.value.iter().map(|v| *v > T::zero()))
            .collect()
    }

    fn push(&mut self, dims: Vec<usize>, value: Vec<T>, op: Op) -> Var {
        debug_assert_eq!(dims.iter().product::<usize>(), value.len());
        self.nodes.push(Node { dims, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, dims: Vec<usize>, value: Vec<T>) -> Result<Var> {
        let len: usize = dims.iter().product();
        if len != value.len() {
            return Err(NnError::shape("graph input", format!("{dims:?}"), value.len()));
        }
        Ok(self.push(dims, value, Op::Input))
    }

    fn expect_rank(&self, x: Var, rank: usize, context: &str) -> Result<&[usize]> {
        let dims = self.dims(x);
        if dims.len() != rank {
            return Err(NnError::shape(context, format!("rank {rank}"), format!("{dims:?}")));
        }
        Ok(dims)
    }

    /// Periodic 1-D convolution (correlation form) of `[B, N, Cin]` with
    /// weights `[window, Cin, Cout]` and bias `[Cout]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: ParamId,
        b: ParamId,
        dilation: usize,
        relu: bool,
    ) -> Result<Var> {
        let dims = self.expect_rank(x, 3, "conv1d input")?.to_vec();
        let wd = &self.params.layout.blocks[w.0].dims;
        let (window, cin, cout) = (wd[0], wd[1], wd[2]);
        if dims[2] != cin {
            return Err(NnError::shape("conv1d channels", cin, dims[2]));
        }
        let taps = Taps::periodic_1d(dims[1], window, dilation);
        self.conv(x, w, b, taps, vec![dims[0], dims[1], cout], cin, cout, relu)
    }

    /// 2-D convolution of `[B, N0, N1, Cin]` with weights
    /// `[k0, k1, Cin, Cout]`, periodic along `N0` and zero padded along `N1`.
    pub fn conv2d(&mut self, x: Var, w: ParamId, b: ParamId, relu: bool) -> Result<Var> {
        let dims = self.expect_rank(x, 4, "conv2d input")?.to_vec();
        let wd = &self.params.layout.blocks[w.0].dims;
        let (k0, k1, cin, cout) = (wd[0], wd[1], wd[2], wd[3]);
        if dims[3] != cin {
            return Err(NnError::shape("conv2d channels", cin, dims[3]));
        }
        let taps = Taps::mixed_2d(dims[1], dims[2], (k0, k1));
        self.conv(x, w, b, taps, vec![dims[0], dims[1], dims[2], cout], cin, cout, relu)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        x: Var,
        w: ParamId,
        b: ParamId,
        taps: Taps,
        out_dims: Vec<usize>,
        cin: usize,
        cout: usize,
        relu: bool,
    ) -> Result<Var> {
        let batch = out_dims[0];
        let xv = &self.nodes[x.0].value;
        let wv = self.params.get(w);
        let bv = self.params.get(b);
        let width = taps.taps * cin;
        let sites = taps.sites;
        let mut y = vec![T::zero(); batch * sites * cout];
        for row in y.chunks_exact_mut(cout) {
            row.copy_from_slice(bv);
        }
        let per = samples_per_chunk(sites, width);
        let identity = taps.is_identity();
        let mut col = Vec::new();
        let mut start = 0;
        if cout == 1 {
            single_output_forward(xv, wv, &taps, cin, &mut y);
            start = batch;
        }
        while start < batch {
            let end = (start + per).min(batch);
            let rows = (end - start) * sites;
            let a: &[T] = if identity {
                &xv[start * sites * cin..end * sites * cin]
            } else {
                im2col(xv, &taps, cin, start..end, &mut col);
                &col
            };
            T::gemm(
                rows,
                width,
                cout,
                T::one(),
                a,
                (width, 1),
                wv,
                (cout, 1),
                T::one(),
                &mut y[start * sites * cout..end * sites * cout],
                (cout, 1),
            );
            start = end;
        }
        if relu {
            for v in &mut y {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Ok(self.push(
            out_dims,
            y,
            Op::Conv {
                x: x.0,
                w,
                b,
                taps,
                cin,
                cout,
                relu,
            },
        ))
    }

    fn periodic_dims(&self, x: Var, context: &str, p: usize) -> Result<(usize, usize, usize)> {
        let d = self.expect_rank(x, 3, context)?;
        if p == 0 || p >= d[1] {
            return Err(NnError::InvalidSpec(format!(
                "{context}: offset {p} out of range for length {}",
                d[1]
            )));
        }
        Ok((d[0], d[1], d[2]))
    }

    /// `(x[i] + x[i + p]) / sqrt(2)` along the periodic axis.
    pub fn haar_sum(&mut self, x: Var, p: usize) -> Result<Var> {
        let (b, n, c) = self.periodic_dims(x, "haar_sum", p)?;
        let y = haar_pair(&self.nodes[x.0].value, b, n, c, p, T::one());
        Ok(self.push(vec![b, n, c], y, Op::HaarSum { x: x.0, p }))
    }

    /// `(x[i] - x[i + p]) / sqrt(2)` along the periodic axis.
    pub fn haar_diff(&mut self, x: Var, p: usize) -> Result<Var> {
        let (b, n, c) = self.periodic_dims(x, "haar_diff", p)?;
        let y = haar_pair(&self.nodes[x.0].value, b, n, c, p, -T::one());
        Ok(self.push(vec![b, n, c], y, Op::HaarDiff { x: x.0, p }))
    }

    /// Inverse of the undecimated pair above:
    /// `y[i] = ((a[i] + b[i]) + (a[i - p] - b[i - p])) / (2 sqrt(2))`.
    pub fn haar_merge(&mut self, a: Var, b: Var, p: usize) -> Result<Var> {
        let (bs, n, c) = self.periodic_dims(a, "haar_merge", p)?;
        self.same_dims(a, b, "haar_merge")?;
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let h = frac_1_sqrt_2::<T>() * T::lit(0.5);
        let mut y = vec![T::zero(); av.len()];
        for s in 0..bs {
            for i in 0..n {
                let im = (i + n - p) % n;
                let (o, om) = ((s * n + i) * c, (s * n + im) * c);
                for k in 0..c {
                    y[o + k] = h * ((av[o + k] + bv[o + k]) + (av[om + k] - bv[om + k]));
                }
            }
        }
        Ok(self.push(vec![bs, n, c], y, Op::HaarMerge { a: a.0, b: b.0, p }))
    }

    fn same_dims(&self, a: Var, b: Var, context: &str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(NnError::shape(
                context,
                format!("{:?}", self.dims(a)),
                format!("{:?}", self.dims(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "add")?;
        let y = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| *x + *y)
            .collect();
        Ok(self.push(self.dims(a).to_vec(), y, Op::Add { a: a.0, b: b.0 }))
    }

    /// Concatenation along the channel (last) axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (self.dims(a).to_vec(), self.dims(b).to_vec());
        if da.len() != db.len() || da[..da.len() - 1] != db[..db.len() - 1] {
            return Err(NnError::shape("concat", format!("{da:?}"), format!("{db:?}")));
        }
        let (ca, cb) = (da[da.len() - 1], db[db.len() - 1]);
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut y = Vec::with_capacity(av.len() + bv.len());
        for (ra, rb) in av.chunks_exact(ca).zip(bv.chunks_exact(cb)) {
            y.extend_from_slice(ra);
            y.extend_from_slice(rb);
        }
        let mut dims = da;
        *dims.last_mut().unwrap() = ca + cb;
        Ok(self.push(dims, y, Op::Concat { a: a.0, b: b.0 }))
    }

    pub fn reshape(&mut self, x: Var, dims: Vec<usize>) -> Result<Var> {
        let len: usize = dims.iter().product();
        if len != self.nodes[x.0].value.len() {
            return Err(NnError::shape(
                "reshape",
                format!("{:?}", self.dims(x)),
                format!("{dims:?}"),
            ));
        }
        let y = self.nodes[x.0].value.clone();
        Ok(self.push(dims, y, Op::Reshape { x: x.0 }))
    }

    /// Reverse sweep from `out` seeded with `d loss / d out`.
    pub fn backward(&self, out: Var, seed: &[T]) -> Result<Grads<T>> {
        if seed.len() != self.nodes[out.0].value.len() {
            return Err(NnError::shape("backward seed", self.nodes[out.0].value.len(), seed.len()));
        }
        let mut grads = Grads::zeros(&self.params.layout);
        let mut node_grads: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        node_grads[out.0] = Some(seed.to_vec());
        for i in (0..=out.0).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Conv {
                    x,
                    w,
                    b,
                    taps,
                    cin,
                    cout,
                    relu,
                } => {
                    let need_x = !matches!(self.nodes[*x].op, Op::Input);
                    let mut gx = need_x.then(|| take_or_zero(&mut node_grads[*x], self.nodes[*x].value.len()));
                    self.conv_backward(
                        &self.nodes[*x].value,
                        &node.value,
                        g,
                        (*w, *b),
                        taps,
                        (*cin, *cout, *relu),
                        &mut grads,
                        gx.as_mut(),
                    );
                    if let Some(gx) = gx {
                        node_grads[*x] = Some(gx);
                    }
                }
                Op::HaarSum { x, p } | Op::HaarDiff { x, p } => {
                    let sign = if matches!(node.op, Op::HaarSum { .. }) {
                        T::one()
                    } else {
                        -T::one()
                    };
                    let (bs, n, c) = (node.dims[0], node.dims[1], node.dims[2]);
                    let r = frac_1_sqrt_2::<T>();
                    let gx = slot(&mut node_grads[*x], g.len());
                    for s in 0..bs {
                        for i in 0..n {
                            let (o, op) = ((s * n + i) * c, (s * n + (i + p) % n) * c);
                            for k in 0..c {
                                gx[o + k] += r * g[o + k];
                                gx[op + k] += sign * r * g[o + k];
                            }
                        }
                    }
                }
                Op::HaarMerge { a, b, p } => {
                    let (bs, n, c) = (node.dims[0], node.dims[1], node.dims[2]);
                    let h = frac_1_sqrt_2::<T>() * T::lit(0.5);
                    for (target, sign) in [(*a, T::one()), (*b, -T::one())] {
                        let gt = slot(&mut node_grads[target], g.len());
                        for s in 0..bs {
                            for i in 0..n {
                                let (o, om) = ((s * n + i) * c, (s * n + (i + n - p) % n) * c);
                                for k in 0..c {
                                    gt[o + k] += h * g[o + k];
                                    gt[om + k] += sign * h * g[o + k];
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    for t in [*a, *b] {
                        for (acc, v) in slot(&mut node_grads[t], g.len()).iter_mut().zip(&g) {
                            *acc += *v;
                        }
                    }
                }
                Op::Concat { a, b } => {
                    let ca = *self.nodes[*a].dims.last().unwrap();
                    let cb = *self.nodes[*b].dims.last().unwrap();
                    let rows = g.len() / (ca + cb);
                    {
                        let ga = slot(&mut node_grads[*a], rows * ca);
                        for r in 0..rows {
                            for k in 0..ca {
                                ga[r * ca + k] += g[r * (ca + cb) + k];
                            }
                        }
                    }
                    let gb = slot(&mut node_grads[*b], rows * cb);
                    for r in 0..rows {
                        for k in 0..cb {
                            gb[r * cb + k] += g[r * (ca + cb) + ca + k];
                        }
                    }
                }
                Op::Reshape { x } => {
                    for (acc, v) in slot(&mut node_grads[*x], g.len()).iter_mut().zip(&g) {
                        *acc += *v;
                    }
                }
            }
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        x: &[T],
        y: &[T],
        mut g: Vec<T>,
        (w, b): (ParamId, ParamId),
        taps: &Taps,
        (cin, cout, relu): (usize, usize, bool),
        grads: &mut Grads<T>,
        mut gx: Option<&mut Vec<T>>,
    ) {
        if relu {
            for (gi, yi) in g.iter_mut().zip(y) {
                if *yi <= T::zero() {
                    *gi = T::zero();
                }
            }
        }
        {
            let gb = grads.get_mut(b);
            for row in g.chunks_exact(cout) {
                for (acc, v) in gb.iter_mut().zip(row) {
                    *acc += *v;
                }
            }
        }
        let sites = taps.sites;
        let width = taps.taps * cin;
        let batch = g.len() / (sites * cout);
        let per = samples_per_chunk(sites, width);
        let identity = taps.is_identity();
        let wv = self.params.get(w);
        let mut col = Vec::new();
        let mut gcol = Vec::new();
        let mut start = 0;
        if cout == 1 {
            single_output_backward(x, wv, &g, taps, cin, grads.get_mut(w), gx.as_deref_mut().map(|v| v.as_mut_slice()));
            start = batch;
        }
        while start < batch {
            let end = (start + per).min(batch);
            let rows = (end - start) * sites;
            let gy = &g[start * sites * cout..end * sites * cout];
            let a: &[T] = if identity {
                &x[start * sites * cin..end * sites * cin]
            } else {
                im2col(x, taps, cin, start..end, &mut col);
                &col
            };
            // dW += col^T gy
            T::gemm(
                width,
                rows,
                cout,
                T::one(),
                a,
                (1, width),
                gy,
                (cout, 1),
                T::one(),
                grads.get_mut(w),
                (cout, 1),
            );
            if let Some(gx) = gx.as_deref_mut() {
                if identity {
                    T::gemm(
                        rows,
                        cout,
                        width,
                        T::one(),
                        gy,
                        (cout, 1),
                        wv,
                        (1, cout),
                        T::one(),
                        &mut gx[start * sites * cin..end * sites * cin],
                        (width, 1),
                    );
                } else {
                    gcol.clear();
                    gcol.resize(rows * width, T::zero());
                    T::gemm(
                        rows,
                        cout,
                        width,
                        T::one(),
                        gy,
                        (cout, 1),
                        wv,
                        (1, cout),
                        T::zero(),
                        &mut gcol,
                        (width, 1),
                    );
                    col2im(&gcol, taps, cin, start..end, gx);
                }
            }
            start = end;
        }
    }
}

const LANES: usize = 8;

/// Dot product with a fixed lane split, so the order of additions does not
/// depend on the target.
fn dot<T: NnScalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let (ca, ra) = (a.chunks_exact(LANES), a.chunks_exact(LANES).remainder());
    for (x, y) in ca.zip(b.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let tail = a.len() - ra.len();
    let mut s = acc.iter().fold(T::zero(), |s, v| s + *v);
    for (x, y) in ra.iter().zip(&b[tail..]) {
        s += *x * *y;
    }
    s
}

fn axpy<T: NnScalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Convolution to one output channel without the lowered matrix; `y`
/// already holds the bias.
fn single_output_forward<T: NnScalar>(x: &[T], w: &[T], taps: &Taps, cin: usize, y: &mut [T]) {
    let sites = taps.sites;
    for (s, ys) in y.chunks_exact_mut(sites).enumerate() {
        let xs = &x[s * sites * cin..(s + 1) * sites * cin];
        for (site, out) in ys.iter_mut().enumerate() {
            for t in 0..taps.taps {
                let j = taps.index[site * taps.taps + t];
                if j != PAD {
                    let j = j as usize;
                    *out += dot(&xs[j * cin..(j + 1) * cin], &w[t * cin..(t + 1) * cin]);
                }
            }
        }
    }
}

fn single_output_backward<T: NnScalar>(
    x: &[T],
    w: &[T],
    g: &[T],
    taps: &Taps,
    cin: usize,
    gw: &mut [T],
    mut gx: Option<&mut [T]>,
) {
    let sites = taps.sites;
    for (s, gs) in g.chunks_exact(sites).enumerate() {
        let range = s * sites * cin..(s + 1) * sites * cin;
        let xs = &x[range.clone()];
        for (site, &gv) in gs.iter().enumerate() {
            if gv == T::zero() {
                continue;
            }
            for t in 0..taps.taps {
                let j = taps.index[site * taps.taps + t];
                if j != PAD {
                    let j = j as usize;
                    axpy(gv, &xs[j * cin..(j + 1) * cin], &mut gw[t * cin..(t + 1) * cin]);
                    if let Some(gx) = gx.as_deref_mut() {
                        let gxs = &mut gx[range.clone()];
                        axpy(gv, &w[t * cin..(t + 1) * cin], &mut gxs[j * cin..(j + 1) * cin]);
                    }
                }
            }
        }
    }
}

fn haar_pair<T: NnScalar>(x: &[T], b: usize, n: usize, c: usize, p: usize, sign: T) -> Vec<T> {
    let r = frac_1_sqrt_2::<T>();
    let mut y = vec![T::zero(); x.len()];
    for s in 0..b {
        for i in 0..n {
            let (o, op) = ((s * n + i) * c, (s * n + (i + p) % n) * c);
            for k in 0..c {
                y[o + k] = r * (x[o + k] + sign * x[op + k]);
            }
        }
    }
    y
}

fn slot<T: NnScalar>(s: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
    s.get_or_insert_with(|| vec![T::zero(); len])
}

fn take_or_zero<T: NnScalar>(s: &mut Option<Vec<T>>, len: usize) -> Vec<T> {
    s.take().unwrap_or_else(|| vec![T::zero(); len])
}

fn im2col<T: NnScalar>(
    x: &[T],
    taps: &Taps,
    cin: usize,
    samples: std::ops::Range<usize>,
    col: &mut Vec<T>,
) {
    let width = taps.taps * cin;
    let sites = taps.sites;
    col.clear();
    col.resize(samples.len() * sites * width, T::zero());
    for (ls, s) in samples.enumerate() {
        let xs = &x[s * sites * cin..(s + 1) * sites * cin];
        for site in 0..sites {
            let row = &mut col[(ls * sites + site) * width..(ls * sites + site + 1) * width];
            for t in 0..taps.taps {
                let j = taps.index[site * taps.taps + t];
                if j != PAD {
                    let j = j as usize;
                    row[t * cin..(t + 1) * cin].copy_from_slice(&xs[j * cin..(j + 1) * cin]);
                }
            }
        }
    }
}

fn col2im<T: NnScalar>(
    gcol: &[T],
    taps: &Taps,
    cin: usize,
    samples: std::ops::Range<usize>,
    gx: &mut [T],
) {
    let width = taps.taps * cin;
    let sites = taps.sites;
    for (ls, s) in samples.enumerate() {
        let gs = &mut gx[s * sites * cin..(s + 1) * sites * cin];
        for site in 0..sites {
            let row = &gcol[(ls * sites + site) * width..(ls * sites + site + 1) * width];
            for t in 0..taps.taps {
                let j = taps.index[site * taps.taps + t];
                if j != PAD {
                    let j = j as usize;
                    for k in 0..cin {
                        gs[j * cin + k] += row[t * cin + k];
                    }
                }
            }
        }
    }
}
