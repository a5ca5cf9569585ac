//! Layer specifications and the shape-checked computation graph behind
//! [`Network`](super::Network).
//!
//! Activations are channels-last: a 1D instance is `[length, channels]`, a 2D
//! instance `[height, width, channels]`. Convolutions are stride 1 with "same"
//! zero padding (the extra pad for even kernels goes after the signal).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Op};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv1D {
        kernel_size: usize,
        kernel_count: usize,
    },
    Conv2D {
        kernel_size: [usize; 2],
        kernel_count: usize,
    },
    TransposedConv1D {
        kernel_size: usize,
        kernel_count: usize,
    },
    TransposedConv2D {
        kernel_size: [usize; 2],
        kernel_count: usize,
    },
    MaxPool {
        pool_factor: usize,
    },
    /// Nearest-neighbour upsampling. `output_size` crops the spatial result so
    /// an upsample can mirror a pool over odd-sized inputs.
    Upsample {
        pool_factor: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_size: Option<Vec<usize>>,
    },
    Dense {
        units: usize,
    },
    ReLU,
    Softmax,
    Flatten,
    /// Concatenates the input with the output of `branch` along the channel
    /// axis, input channels first.
    ChannelConcat {
        branch: Vec<LayerSpec>,
    },
}

pub const DEFAULT_POOL_FACTOR: usize = 2;

impl LayerSpec {
    pub fn conv2d(kernel_count: usize) -> Self {
        LayerSpec::Conv2D {
            kernel_size: [3, 3],
            kernel_count,
        }
    }

    pub fn conv1d(kernel_count: usize) -> Self {
        LayerSpec::Conv1D {
            kernel_size: 4,
            kernel_count,
        }
    }

    pub fn max_pool() -> Self {
        LayerSpec::MaxPool {
            pool_factor: DEFAULT_POOL_FACTOR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1D { .. } => "Conv1D",
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::TransposedConv1D { .. } => "TransposedConv1D",
            LayerSpec::TransposedConv2D { .. } => "TransposedConv2D",
            LayerSpec::MaxPool { .. } => "MaxPool",
            LayerSpec::Upsample { .. } => "Upsample",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::Softmax => "Softmax",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::ChannelConcat { .. } => "ChannelConcat",
        }
    }
}

/// Spatial grid of one instance; 1D data uses `h == 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Grid {
    h: usize,
    w: usize,
    c: usize,
}

impl Grid {
    fn of(shape: &[usize]) -> Option<Grid> {
        match *shape {
            [w, c] => Some(Grid { h: 1, w, c }),
            [h, w, c] => Some(Grid { h, w, c }),
            _ => None,
        }
    }

    fn positions(&self) -> usize {
        self.h * self.w
    }

    fn with_channels(self, c: usize) -> Grid {
        Grid { c, ..self }
    }
}

#[derive(Clone, Copy, Debug)]
struct Window {
    kh: usize,
    kw: usize,
    top: usize,
    left: usize,
}

impl Window {
    fn same(kh: usize, kw: usize) -> Self {
        Window {
            kh,
            kw,
            top: (kh - 1) / 2,
            left: (kw - 1) / 2,
        }
    }

    fn taps(&self) -> usize {
        self.kh * self.kw
    }
}

#[derive(Clone, Debug)]
enum NodeKind {
    Conv { grid: Grid, win: Window, out_c: usize },
    TConv { grid: Grid, win: Window, out_c: usize },
    MaxPool { grid: Grid, fh: usize, fw: usize, oh: usize, ow: usize },
    Upsample { grid: Grid, fh: usize, fw: usize, oh: usize, ow: usize },
    Dense { din: usize, dout: usize },
    Relu,
    Softmax { width: usize },
    Flatten,
    Concat { grid: Grid, branch: Box<Graph> },
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    out_shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// Shape-checked layer sequence. Parameters live outside the graph in one
/// flat buffer; each node owns a contiguous range of it.
#[derive(Clone, Debug)]
pub(crate) struct Graph {
    nodes: Vec<Node>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    param_count: usize,
}

enum Cache {
    None,
    Cols(Vec<f64>),
    Argmax(Vec<usize>),
    Branch(Box<Trace>),
}

/// Activations recorded by a forward pass, consumed by the backward pass.
pub(crate) struct Trace {
    acts: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl Trace {
    pub(crate) fn output(&self) -> &Tensor {
        self.acts.last().expect("trace always holds the input")
    }

    pub(crate) fn into_output(mut self) -> Tensor {
        self.acts.pop().expect("trace always holds the input")
    }
}

fn shape_err(layer: &str, shape: &[usize], what: &str) -> Error {
    Error::Shape(format!("{layer} cannot take input {shape:?}: {what}"))
}

impl Graph {
    pub(crate) fn build(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Graph> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut nodes = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        let mut offset = 0;
        for spec in specs {
            let (kind, out_shape, len) = Self::plan(spec, &shape)?;
            nodes.push(Node {
                kind,
                out_shape: out_shape.clone(),
                offset,
                len,
            });
            offset += len;
            shape = out_shape;
        }
        Ok(Graph {
            nodes,
            input_shape: input_shape.to_vec(),
            output_shape: shape,
            param_count: offset,
        })
    }

    fn plan(spec: &LayerSpec, shape: &[usize]) -> Result<(NodeKind, Vec<usize>, usize)> {
        let name = spec.name();
        let grid = || Grid::of(shape).ok_or_else(|| shape_err(name, shape, "expected [len, ch] or [h, w, ch]"));
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Shape(format!("{name}: {what} must be positive")))
            } else {
                Ok(())
            }
        };
        Ok(match spec {
            LayerSpec::Conv1D {
                kernel_size,
                kernel_count,
            }
            | LayerSpec::TransposedConv1D {
                kernel_size,
                kernel_count,
            } => {
                positive(*kernel_size, "kernel_size")?;
                positive(*kernel_count, "kernel_count")?;
                if shape.len() != 2 {
                    return Err(shape_err(name, shape, "1D layers need [len, ch]"));
                }
                let g = grid()?;
                let win = Window::same(1, *kernel_size);
                let out = vec![g.w, *kernel_count];
                let len = win.taps() * g.c * kernel_count + kernel_count;
                let kind = if matches!(spec, LayerSpec::Conv1D { .. }) {
                    NodeKind::Conv { grid: g, win, out_c: *kernel_count }
                } else {
                    NodeKind::TConv { grid: g, win, out_c: *kernel_count }
                };
                (kind, out, len)
            }
            LayerSpec::Conv2D {
                kernel_size,
                kernel_count,
            }
            | LayerSpec::TransposedConv2D {
                kernel_size,
                kernel_count,
            } => {
                positive(kernel_size[0], "kernel_size")?;
                positive(kernel_size[1], "kernel_size")?;
                positive(*kernel_count, "kernel_count")?;
                if shape.len() != 3 {
                    return Err(shape_err(name, shape, "2D layers need [h, w, ch]"));
                }
                let g = grid()?;
                let win = Window::same(kernel_size[0], kernel_size[1]);
                let out = vec![g.h, g.w, *kernel_count];
                let len = win.taps() * g.c * kernel_count + kernel_count;
                let kind = if matches!(spec, LayerSpec::Conv2D { .. }) {
                    NodeKind::Conv { grid: g, win, out_c: *kernel_count }
                } else {
                    NodeKind::TConv { grid: g, win, out_c: *kernel_count }
                };
                (kind, out, len)
            }
            LayerSpec::MaxPool { pool_factor } => {
                positive(*pool_factor, "pool_factor")?;
                let g = grid()?;
                let fh = if shape.len() == 2 { 1 } else { *pool_factor };
                let fw = *pool_factor;
                let (oh, ow) = (g.h.div_ceil(fh), g.w.div_ceil(fw));
                let out = if shape.len() == 2 { vec![ow, g.c] } else { vec![oh, ow, g.c] };
                (NodeKind::MaxPool { grid: g, fh, fw, oh, ow }, out, 0)
            }
            LayerSpec::Upsample {
                pool_factor,
                output_size,
            } => {
                positive(*pool_factor, "pool_factor")?;
                let g = grid()?;
                let one_d = shape.len() == 2;
                let fh = if one_d { 1 } else { *pool_factor };
                let fw = *pool_factor;
                let (oh, ow) = match output_size {
                    None => (g.h * fh, g.w * fw),
                    Some(size) => {
                        let (oh, ow) = match (one_d, size.as_slice()) {
                            (true, [w]) => (1, *w),
                            (false, [h, w]) => (*h, *w),
                            _ => return Err(shape_err(name, shape, "output_size rank does not match input")),
                        };
                        if oh.div_ceil(fh) != g.h || ow.div_ceil(fw) != g.w {
                            return Err(shape_err(name, shape, "output_size incompatible with pool_factor"));
                        }
                        (oh, ow)
                    }
                };
                let out = if one_d { vec![ow, g.c] } else { vec![oh, ow, g.c] };
                (NodeKind::Upsample { grid: g, fh, fw, oh, ow }, out, 0)
            }
            LayerSpec::Dense { units } => {
                positive(*units, "units")?;
                if shape.len() != 1 {
                    return Err(shape_err(name, shape, "flatten before a dense layer"));
                }
                (NodeKind::Dense { din: shape[0], dout: *units }, vec![*units], shape[0] * units + units)
            }
            LayerSpec::ReLU => (NodeKind::Relu, shape.to_vec(), 0),
            LayerSpec::Softmax => {
                if shape.len() != 1 {
                    return Err(shape_err(name, shape, "softmax acts on a flat vector"));
                }
                (NodeKind::Softmax { width: shape[0] }, shape.to_vec(), 0)
            }
            LayerSpec::Flatten => (NodeKind::Flatten, vec![shape.iter().product()], 0),
            LayerSpec::ChannelConcat { branch } => {
                let g = grid()?;
                let sub = Graph::build(shape, branch)?;
                let bo = &sub.output_shape;
                if bo.len() != shape.len() || bo[..bo.len() - 1] != shape[..shape.len() - 1] {
                    return Err(shape_err(
                        name,
                        shape,
                        &format!("branch output {bo:?} has different spatial dims"),
                    ));
                }
                let mut out = shape.to_vec();
                *out.last_mut().unwrap() += bo[bo.len() - 1];
                let len = sub.param_count;
                (NodeKind::Concat { grid: g, branch: Box::new(sub) }, out, len)
            }
        })
    }

    pub(crate) fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub(crate) fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub(crate) fn param_count(&self) -> usize {
        self.param_count
    }

    /// He-style uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub(crate) fn init_params<R: Rng>(&self, rng: &mut R, params: &mut [f64]) {
        for node in &self.nodes {
            let p = &mut params[node.offset..node.offset + node.len];
            let (weights, fan_in) = match &node.kind {
                NodeKind::Conv { grid, win, out_c } => (win.taps() * grid.c * out_c, win.taps() * grid.c),
                NodeKind::TConv { grid, win, out_c } => (grid.c * win.taps() * out_c, win.taps() * grid.c),
                NodeKind::Dense { din, dout } => (din * dout, *din),
                NodeKind::Concat { branch, .. } => {
                    branch.init_params(rng, p);
                    continue;
                }
                _ => continue,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut p[..weights] {
                *w = rng.random_range(-bound..bound);
            }
            for b in &mut p[weights..] {
                *b = 0.0;
            }
        }
    }

    pub(crate) fn forward(&self, params: &[f64], input: Tensor) -> Result<Trace> {
        if input.instance_shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "network expects instances of shape {:?}, got {:?}",
                self.input_shape,
                input.instance_shape()
            )));
        }
        let n = input.instances();
        let mut acts = Vec::with_capacity(self.nodes.len() + 1);
        let mut caches = Vec::with_capacity(self.nodes.len());
        acts.push(input);
        for node in &self.nodes {
            let x = acts.last().unwrap();
            let p = &params[node.offset..node.offset + node.len];
            let mut out_shape = vec![n];
            out_shape.extend_from_slice(&node.out_shape);
            let (y, cache) = node_forward(node, p, x, n)?;
            acts.push(Tensor::new(out_shape, y)?);
            caches.push(cache);
        }
        Ok(Trace { acts, caches })
    }

    /// Back-propagates `dy` (gradient w.r.t. the graph output), accumulating
    /// parameter gradients into `grads`. Returns the input gradient.
    pub(crate) fn backward(&self, params: &[f64], trace: &Trace, dy: Tensor, grads: &mut [f64]) -> Tensor {
        self.backward_from(self.nodes.len(), params, trace, dy, grads)
    }

    /// Like [`backward`](Self::backward) but starts at the input of node
    /// `end` (used to fuse softmax with cross-entropy).
    pub(crate) fn backward_from(
        &self,
        end: usize,
        params: &[f64],
        trace: &Trace,
        dy: Tensor,
        grads: &mut [f64],
    ) -> Tensor {
        let mut grad = dy;
        for i in (0..end).rev() {
            let node = &self.nodes[i];
            let x = &trace.acts[i];
            let y = &trace.acts[i + 1];
            let range = node.offset..node.offset + node.len;
            let dx = node_backward(node, &params[range.clone()], x, y, &trace.caches[i], grad.data(), &mut grads[range]);
            grad = Tensor::new(x.shape().to_vec(), dx).expect("input gradient matches input shape");
        }
        grad
    }

    pub(crate) fn last_is_softmax(&self) -> bool {
        matches!(self.nodes.last().map(|n| &n.kind), Some(NodeKind::Softmax { .. }))
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }
}

fn im2col(x: &[f64], n: usize, g: Grid, win: Window) -> Vec<f64> {
    let k = win.taps() * g.c;
    let mut cols = vec![0.0; n * g.positions() * k];
    for b in 0..n {
        for oy in 0..g.h {
            for ox in 0..g.w {
                let row = ((b * g.h + oy) * g.w + ox) * k;
                for dy in 0..win.kh {
                    let iy = oy + dy;
                    if iy < win.top || iy - win.top >= g.h {
                        continue;
                    }
                    let iy = iy - win.top;
                    for dx in 0..win.kw {
                        let ix = ox + dx;
                        if ix < win.left || ix - win.left >= g.w {
                            continue;
                        }
                        let ix = ix - win.left;
                        let src = ((b * g.h + iy) * g.w + ix) * g.c;
                        let dst = row + (dy * win.kw + dx) * g.c;
                        cols[dst..dst + g.c].copy_from_slice(&x[src..src + g.c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters each column block back onto the grid.
fn col2im(cols: &[f64], n: usize, g: Grid, win: Window) -> Vec<f64> {
    let k = win.taps() * g.c;
    let mut x = vec![0.0; n * g.positions() * g.c];
    for b in 0..n {
        for oy in 0..g.h {
            for ox in 0..g.w {
                let row = ((b * g.h + oy) * g.w + ox) * k;
                for dy in 0..win.kh {
                    let iy = oy + dy;
                    if iy < win.top || iy - win.top >= g.h {
                        continue;
                    }
                    let iy = iy - win.top;
                    for dx in 0..win.kw {
                        let ix = ox + dx;
                        if ix < win.left || ix - win.left >= g.w {
                            continue;
                        }
                        let ix = ix - win.left;
                        let dst = ((b * g.h + iy) * g.w + ix) * g.c;
                        let src = row + (dy * win.kw + dx) * g.c;
                        for (d, s) in x[dst..dst + g.c].iter_mut().zip(&cols[src..src + g.c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    x
}

fn add_bias(y: &mut [f64], bias: &[f64]) {
    for row in y.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn accumulate_bias_grad(dy: &[f64], db: &mut [f64]) {
    for row in dy.chunks_exact(db.len()) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
}

fn node_forward(node: &Node, p: &[f64], x: &Tensor, n: usize) -> Result<(Vec<f64>, Cache)> {
    let x = x.data();
    Ok(match &node.kind {
        NodeKind::Conv { grid, win, out_c } => {
            let m = n * grid.positions();
            let k = win.taps() * grid.c;
            let (w, b) = p.split_at(k * out_c);
            let cols = im2col(x, n, *grid, *win);
            let mut y = vec![0.0; m * out_c];
            gemm(m, k, *out_c, &cols, Op::N, w, Op::N, 0.0, &mut y);
            add_bias(&mut y, b);
            (y, Cache::Cols(cols))
        }
        NodeKind::TConv { grid, win, out_c } => {
            let m = n * grid.positions();
            let k = win.taps() * out_c;
            let (w, b) = p.split_at(grid.c * k);
            let mut cols = vec![0.0; m * k];
            gemm(m, grid.c, k, x, Op::N, w, Op::N, 0.0, &mut cols);
            let mut y = col2im(&cols, n, grid.with_channels(*out_c), *win);
            add_bias(&mut y, b);
            (y, Cache::None)
        }
        NodeKind::MaxPool { grid, fh, fw, oh, ow } => {
            let c = grid.c;
            let mut y = vec![0.0; n * oh * ow * c];
            let mut arg = vec![0usize; y.len()];
            for b in 0..n {
                for oy in 0..*oh {
                    for ox in 0..*ow {
                        for ch in 0..c {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_i = usize::MAX;
                            for iy in oy * fh..((oy + 1) * fh).min(grid.h) {
                                for ix in ox * fw..((ox + 1) * fw).min(grid.w) {
                                    let i = ((b * grid.h + iy) * grid.w + ix) * c + ch;
                                    if x[i] > best || best_i == usize::MAX {
                                        best = x[i];
                                        best_i = i;
                                    }
                                }
                            }
                            let o = ((b * oh + oy) * ow + ox) * c + ch;
                            y[o] = best;
                            arg[o] = best_i;
                        }
                    }
                }
            }
            (y, Cache::Argmax(arg))
        }
        NodeKind::Upsample { grid, fh, fw, oh, ow } => {
            let c = grid.c;
            let mut y = vec![0.0; n * oh * ow * c];
            for b in 0..n {
                for oy in 0..*oh {
                    for ox in 0..*ow {
                        let src = ((b * grid.h + oy / fh) * grid.w + ox / fw) * c;
                        let dst = ((b * oh + oy) * ow + ox) * c;
                        y[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
            (y, Cache::None)
        }
        NodeKind::Dense { din, dout } => {
            let (w, b) = p.split_at(din * dout);
            let mut y = vec![0.0; n * dout];
            gemm(n, *din, *dout, x, Op::N, w, Op::N, 0.0, &mut y);
            add_bias(&mut y, b);
            (y, Cache::None)
        }
        NodeKind::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), Cache::None),
        NodeKind::Softmax { width } => {
            let mut y = x.to_vec();
            for row in y.chunks_exact_mut(*width) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            (y, Cache::None)
        }
        NodeKind::Flatten => (x.to_vec(), Cache::None),
        NodeKind::Concat { grid, branch } => {
            let input = Tensor::new(
                std::iter::once(n).chain(branch.input_shape.iter().copied()).collect(),
                x.to_vec(),
            )?;
            let sub = branch.forward(p, input)?;
            let bo = sub.output().data();
            let cb = branch.output_shape.last().copied().unwrap();
            let c = grid.c;
            let mut y = Vec::with_capacity(n * grid.positions() * (c + cb));
            for pos in 0..n * grid.positions() {
                y.extend_from_slice(&x[pos * c..(pos + 1) * c]);
                y.extend_from_slice(&bo[pos * cb..(pos + 1) * cb]);
            }
            (y, Cache::Branch(Box::new(sub)))
        }
    })
}

fn node_backward(
    node: &Node,
    p: &[f64],
    x: &Tensor,
    y: &Tensor,
    cache: &Cache,
    dy: &[f64],
    g: &mut [f64],
) -> Vec<f64> {
    let n = x.instances();
    let xd = x.data();
    match &node.kind {
        NodeKind::Conv { grid, win, out_c } => {
            let m = n * grid.positions();
            let k = win.taps() * grid.c;
            let (w, _) = p.split_at(k * out_c);
            let (gw, gb) = g.split_at_mut(k * out_c);
            let Cache::Cols(cols) = cache else { unreachable!() };
            gemm(k, m, *out_c, cols, Op::T, dy, Op::N, 1.0, gw);
            accumulate_bias_grad(dy, gb);
            let mut dcols = vec![0.0; m * k];
            gemm(m, *out_c, k, dy, Op::N, w, Op::T, 0.0, &mut dcols);
            col2im(&dcols, n, *grid, *win)
        }
        NodeKind::TConv { grid, win, out_c } => {
            let m = n * grid.positions();
            let k = win.taps() * out_c;
            let (w, _) = p.split_at(grid.c * k);
            let (gw, gb) = g.split_at_mut(grid.c * k);
            let dcols = im2col(dy, n, grid.with_channels(*out_c), *win);
            gemm(grid.c, m, k, xd, Op::T, &dcols, Op::N, 1.0, gw);
            accumulate_bias_grad(dy, gb);
            let mut dx = vec![0.0; m * grid.c];
            gemm(m, k, grid.c, &dcols, Op::N, w, Op::T, 0.0, &mut dx);
            dx
        }
        NodeKind::MaxPool { .. } => {
            let Cache::Argmax(arg) = cache else { unreachable!() };
            let mut dx = vec![0.0; xd.len()];
            for (&i, &d) in arg.iter().zip(dy) {
                dx[i] += d;
            }
            dx
        }
        NodeKind::Upsample { grid, fh, fw, oh, ow } => {
            let c = grid.c;
            let mut dx = vec![0.0; xd.len()];
            for b in 0..n {
                for oy in 0..*oh {
                    for ox in 0..*ow {
                        let dst = ((b * grid.h + oy / fh) * grid.w + ox / fw) * c;
                        let src = ((b * oh + oy) * ow + ox) * c;
                        for ch in 0..c {
                            dx[dst + ch] += dy[src + ch];
                        }
                    }
                }
            }
            dx
        }
        NodeKind::Dense { din, dout } => {
            let (w, _) = p.split_at(din * dout);
            let (gw, gb) = g.split_at_mut(din * dout);
            gemm(*din, n, *dout, xd, Op::T, dy, Op::N, 1.0, gw);
            accumulate_bias_grad(dy, gb);
            let mut dx = vec![0.0; n * din];
            gemm(n, *dout, *din, dy, Op::N, w, Op::T, 0.0, &mut dx);
            dx
        }
        NodeKind::Relu => xd
            .iter()
            .zip(dy)
            .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
            .collect(),
        NodeKind::Softmax { width } => {
            let mut dx = vec![0.0; xd.len()];
            for ((yr, dr), out) in y
                .data()
                .chunks_exact(*width)
                .zip(dy.chunks_exact(*width))
                .zip(dx.chunks_exact_mut(*width))
            {
                let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                for ((o, &yi), &di) in out.iter_mut().zip(yr).zip(dr) {
                    *o = yi * (di - dot);
                }
            }
            dx
        }
        NodeKind::Flatten => dy.to_vec(),
        NodeKind::Concat { grid, branch } => {
            let Cache::Branch(sub) = cache else { unreachable!() };
            let c = grid.c;
            let cb = branch.output_shape.last().copied().unwrap();
            let positions = n * grid.positions();
            let mut dx = Vec::with_capacity(positions * c);
            let mut db = Vec::with_capacity(positions * cb);
            for pos in 0..positions {
                let row = &dy[pos * (c + cb)..(pos + 1) * (c + cb)];
                dx.extend_from_slice(&row[..c]);
                db.extend_from_slice(&row[c..]);
            }
            let db = Tensor::new(sub.output().shape().to_vec(), db).expect("branch gradient shape");
            let dbranch = branch.backward(p, sub, db, g);
            for (a, b) in dx.iter_mut().zip(dbranch.data()) {
                *a += b;
            }
            dx
        }
    }
}
