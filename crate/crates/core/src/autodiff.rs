//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in execution order, so the tape is
//! already topologically sorted; [`Graph::backward`] walks it in reverse and
//! accumulates gradients by summation into every node that requires one.

use crate::conv::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
            // `max` would turn NaN into 0 and hide bad input.
            Activation::Relu => {
                if x < T::zero() {
                    T::zero()
                } else {
                    x
                }
            }
        }
    }

    /// Derivative expressed through the forward output `y`.
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// How a batch-norm node obtains its statistics.
#[derive(Clone, Debug)]
pub enum NormStats<T> {
    /// Per-channel mean and biased variance of the current batch.
    Batch { epsilon: T },
    /// Fixed (moving) statistics.
    Fixed {
        mean: Vec<T>,
        var: Vec<T>,
        epsilon: T,
    },
}

/// Per-channel statistics observed by a batch-norm node in batch mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Act(Activation, Var),
    Conv {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    SliceChannels {
        input: Var,
        start: usize,
    },
    ConcatChannels(Vec<Var>),
    TimeSlice {
        input: Var,
        t: usize,
    },
    StackTime(Vec<Var>),
    Reshape(Var),
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        inv_std: Vec<T>,
        normalized: Vec<T>,
        batch_stats: bool,
    },
    MaskedMse {
        pred: Var,
        residual: Vec<T>,
        count: T,
    },
    Sum(Var),
    Scale(Var, T),
}

impl<T> Op<T> {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Binary(BinaryOp::Add, ..) => "add",
            Op::Binary(BinaryOp::Sub, ..) => "sub",
            Op::Binary(BinaryOp::Mul, ..) => "mul",
            Op::Act(Activation::Sigmoid, _) => "sigmoid",
            Op::Act(Activation::Tanh, _) => "tanh",
            Op::Act(Activation::Relu, _) => "relu",
            Op::Conv { geom, .. } if geom.kernel == [1, 1, 1] => "conv1x1",
            Op::Conv { .. } => "conv",
            Op::SliceChannels { .. } => "slice_channels",
            Op::ConcatChannels(_) => "concat_channels",
            Op::TimeSlice { .. } => "time_slice",
            Op::StackTime(_) => "stack_time",
            Op::Reshape(_) => "reshape",
            Op::BatchNorm { .. } => "batch_norm",
            Op::MaskedMse { .. } => "masked_mse",
            Op::Sum(_) => "sum",
            Op::Scale(..) => "scale",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation tape. Single-owner; build one per forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `var`, or `None` when the node
    /// is detached (does not require a gradient).
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// `(outer, channels, inner)` view of a tensor whose axis 1 is the channel axis.
fn channel_view(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf; it is differentiable iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad(false))
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Operation kinds in tape order (leaves included).
    pub fn op_kinds(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.kind()).collect()
    }

    pub fn count_ops(&self, kind: &str) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(format!(
                "{op:?} on shapes {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let f = match op {
            BinaryOp::Add => |x: T, y: T| x + y,
            BinaryOp::Sub => |x: T, y: T| x - y,
            BinaryOp::Mul => |x: T, y: T| x * y,
        };
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Binary(op, a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    pub fn activation(&mut self, act: Activation, a: Var) -> Var {
        let out = self.value(a).map(|x| act.apply(x));
        self.push(out, Op::Act(act, a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().with_grad(false).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    fn conv(&mut self, input: Var, kernel: Var, bias: Option<Var>, rank: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != rank || ks.len() != rank {
            return Err(Error::dim(format!(
                "conv expects rank-{rank} input and kernel, got {xs:?} and {ks:?}"
            )));
        }
        if ks[1] != xs[1] {
            return Err(Error::dim(format!(
                "kernel {ks:?} expects {} input channels, input {xs:?} has {}",
                ks[1], xs[1]
            )));
        }
        if let Some(&even) = ks[2..].iter().find(|&&k| k % 2 == 0) {
            return Err(Error::config(format!(
                "kernel extent {even} is even; same-padding needs odd extents"
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ks[0]] {
                return Err(Error::dim(format!(
                    "bias shape {:?} does not match {} output channels",
                    self.shape(b),
                    ks[0]
                )));
            }
        }
        let pad = 5 - rank;
        let mut dims = [1usize; 3];
        let mut kern = [1usize; 3];
        dims[pad..].copy_from_slice(&xs[2..]);
        kern[pad..].copy_from_slice(&ks[2..]);
        let geom = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            c_out: ks[0],
            dims,
            kernel: kern,
        };
        let data = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let mut shape = xs.clone();
        shape[1] = ks[0];
        let out = Tensor::new(shape, data)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        Ok(self.push(
            out,
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
            },
            &inputs,
        ))
    }

    /// `[B,C_in,H,W] * [C_out,C_in,kh,kw] + b -> [B,C_out,H,W]`, zero "same" padding.
    pub fn conv2d_same(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        self.conv(input, kernel, bias, 4)
    }

    /// `[B,C_in,D,H,W] * [C_out,C_in,kd,kh,kw] + b -> [B,C_out,D,H,W]`, zero "same" padding.
    pub fn conv3d_same(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        self.conv(input, kernel, bias, 5)
    }

    /// Channels `start..start+len` along axis 1.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 || len == 0 || start + len > shape[1] {
            return Err(Error::dim(format!(
                "channel slice {start}..{} of shape {shape:?}",
                start + len
            )));
        }
        let (outer, c, inner) = channel_view(&shape);
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * c + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[1] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::SliceChannels { input, start }, &[input]))
    }

    /// Concatenation along axis 1.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::usage("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if base.len() < 2 {
            return Err(Error::dim(format!("concat needs rank >= 2, got {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                return Err(Error::dim(format!(
                    "concat of {s:?} with {base:?}: non-channel axes differ"
                )));
            }
            total += s[1];
        }
        let (outer, _, inner) = channel_view(&base);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let c = v.shape()[1];
                data.extend_from_slice(&v.data()[o * c * inner..(o + 1) * c * inner]);
            }
        }
        let mut shape = base;
        shape[1] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::ConcatChannels(parts.to_vec()), parts))
    }

    /// `[B,C,L,H,W] -> [B,C,H,W]` at time `t`.
    pub fn time_slice(&mut self, input: Var, t: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 5 || t >= shape[2] {
            return Err(Error::dim(format!("time slice {t} of shape {shape:?}")));
        }
        let (bc, l, hw) = (shape[0] * shape[1], shape[2], shape[3] * shape[4]);
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(bc * hw);
        for i in 0..bc {
            data.extend_from_slice(&src[(i * l + t) * hw..(i * l + t + 1) * hw]);
        }
        let out = Tensor::new(vec![shape[0], shape[1], shape[3], shape[4]], data)?;
        Ok(self.push(out, Op::TimeSlice { input, t }, &[input]))
    }

    /// Stacks `[B,C,H,W]` frames into `[B,C,L,H,W]`.
    pub fn stack_time(&mut self, frames: &[Var]) -> Result<Var> {
        let first = frames
            .first()
            .ok_or_else(|| Error::usage("stack of zero frames"))?;
        let s = self.shape(*first).to_vec();
        if s.len() != 4 || frames.iter().any(|&f| self.shape(f) != s.as_slice()) {
            return Err(Error::dim("stack_time needs equal rank-4 frames"));
        }
        let (bc, hw, l) = (s[0] * s[1], s[2] * s[3], frames.len());
        let mut data = vec![T::zero(); bc * l * hw];
        for (t, &f) in frames.iter().enumerate() {
            let src = self.value(f).data();
            for i in 0..bc {
                data[(i * l + t) * hw..(i * l + t + 1) * hw]
                    .copy_from_slice(&src[i * hw..(i + 1) * hw]);
            }
        }
        let out = Tensor::new(vec![s[0], s[1], l, s[2], s[3]], data)?;
        Ok(self.push(out, Op::StackTime(frames.to_vec()), frames))
    }

    /// Per-channel (axis 1) normalization followed by `gamma * x_hat + beta`.
    /// Returns the batch statistics when `stats` is [`NormStats::Batch`].
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            return Err(Error::dim(format!("batch norm on rank-1 shape {shape:?}")));
        }
        let (outer, c, inner) = channel_view(&shape);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim(format!(
                "batch norm over {c} channels with gamma {:?} and beta {:?}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let x = self.value(input).data();
        let count = T::from_usize(outer * inner).expect("count");
        let (mean, var, epsilon, batch_stats) = match stats {
            NormStats::Batch { epsilon } => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut s = T::zero();
                    for o in 0..outer {
                        s = s + x[(o * c + ch) * inner..][..inner].iter().copied().sum::<T>();
                    }
                    let m = s / count;
                    let mut q = T::zero();
                    for o in 0..outer {
                        for &v in &x[(o * c + ch) * inner..][..inner] {
                            q = q + (v - m) * (v - m);
                        }
                    }
                    mean[ch] = m;
                    var[ch] = q / count;
                }
                (mean, var, epsilon, true)
            }
            NormStats::Fixed { mean, var, epsilon } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::dim("moving statistics length differs from channels"));
                }
                (mean, var, epsilon, false)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + epsilon).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut normalized = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for ch in 0..c {
                let base = (o * c + ch) * inner;
                for i in base..base + inner {
                    let xh = (x[i] - mean[ch]) * inv_std[ch];
                    normalized[i] = xh;
                    out[i] = g[ch] * xh + b[ch];
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        let var_out = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                inv_std,
                normalized,
                batch_stats,
            },
            &[input, gamma, beta],
        );
        let stats = batch_stats.then_some(BatchStats { mean, var });
        Ok((var_out, stats))
    }

    /// Mean squared error over active cells.
    ///
    /// `mask` covers the trailing `H x W` axes and is broadcast over every
    /// leading axis; the sum of squared residuals is divided by the number
    /// of active elements.
    pub fn masked_mse(&mut self, pred: Var, target: &Tensor<T>, mask: &[bool]) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::dim(format!(
                "prediction {:?} vs target {:?}",
                p.shape(),
                target.shape()
            )));
        }
        let cells = mask.len();
        if cells == 0 || p.len() % cells != 0 {
            return Err(Error::dim(format!(
                "mask of {cells} cells does not tile tensor of {} values",
                p.len()
            )));
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::usage("mask has no active cells"));
        }
        let count = T::from_usize(active * (p.len() / cells)).expect("count");
        let residual: Vec<T> = p
            .data()
            .iter()
            .zip(target.data())
            .enumerate()
            .map(|(i, (&a, &b))| if mask[i % cells] { a - b } else { T::zero() })
            .collect();
        let loss = residual.iter().map(|&r| r * r).sum::<T>() / count;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::MaskedMse {
                pred,
                residual,
                count,
            },
            &[pred],
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.requires_grad.then(|| {
                    let data = g.unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                    Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut accumulate = |v: Var, delta: Vec<T>| match &mut grads[v.0] {
            Some(existing) => add_into(existing, &delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary(op, a, b) => {
                let (a, b) = (*a, *b);
                match op {
                    BinaryOp::Add => {
                        if needs(a) {
                            accumulate(a, g.to_vec());
                        }
                        if needs(b) {
                            accumulate(b, g.to_vec());
                        }
                    }
                    BinaryOp::Sub => {
                        if needs(a) {
                            accumulate(a, g.to_vec());
                        }
                        if needs(b) {
                            accumulate(b, g.iter().map(|&v| -v).collect());
                        }
                    }
                    BinaryOp::Mul => {
                        let (va, vb) = (self.value(a).data(), self.value(b).data());
                        if needs(a) {
                            accumulate(a, g.iter().zip(vb).map(|(&d, &y)| d * y).collect());
                        }
                        if needs(b) {
                            accumulate(b, g.iter().zip(va).map(|(&d, &x)| d * x).collect());
                        }
                    }
                }
            }
            Op::Act(act, a) => {
                let y = node.value.data();
                let d = g
                    .iter()
                    .zip(y)
                    .map(|(&d, &y)| d * act.derivative_from_output(y))
                    .collect();
                accumulate(*a, d);
            }
            Op::Scale(a, k) => accumulate(*a, g.iter().map(|&d| d * *k).collect()),
            Op::Sum(a) => accumulate(*a, vec![g[0]; self.value(*a).len()]),
            Op::Reshape(a) => accumulate(*a, g.to_vec()),
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
            } => {
                let grads_c = conv::backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g,
                    needs(*input),
                    needs(*kernel),
                    bias.is_some_and(needs),
                );
                if let Some(d) = grads_c.input {
                    accumulate(*input, d);
                }
                if let Some(d) = grads_c.kernel {
                    accumulate(*kernel, d);
                }
                if let (Some(b), Some(d)) = (bias, grads_c.bias) {
                    accumulate(*b, d);
                }
            }
            Op::SliceChannels { input, start } => {
                let in_shape = self.shape(*input);
                let (outer, c, inner) = channel_view(in_shape);
                let len = node.value.shape()[1];
                let mut d = vec![T::zero(); outer * c * inner];
                for o in 0..outer {
                    let dst = (o * c + start) * inner;
                    d[dst..dst + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(*input, d);
            }
            Op::ConcatChannels(parts) => {
                let (outer, total, inner) = channel_view(node.value.shape());
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if needs(p) {
                        let mut d = Vec::with_capacity(outer * c * inner);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            d.extend_from_slice(&g[src..src + c * inner]);
                        }
                        accumulate(p, d);
                    }
                    offset += c;
                }
            }
            Op::TimeSlice { input, t } => {
                let s = self.shape(*input);
                let (bc, l, hw) = (s[0] * s[1], s[2], s[3] * s[4]);
                let mut d = vec![T::zero(); bc * l * hw];
                for i in 0..bc {
                    d[(i * l + t) * hw..(i * l + t + 1) * hw]
                        .copy_from_slice(&g[i * hw..(i + 1) * hw]);
                }
                accumulate(*input, d);
            }
            Op::StackTime(frames) => {
                let s = node.value.shape();
                let (bc, l, hw) = (s[0] * s[1], s[2], s[3] * s[4]);
                for (t, &f) in frames.iter().enumerate() {
                    if !needs(f) {
                        continue;
                    }
                    let mut d = Vec::with_capacity(bc * hw);
                    for i in 0..bc {
                        d.extend_from_slice(&g[(i * l + t) * hw..(i * l + t + 1) * hw]);
                    }
                    accumulate(f, d);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                inv_std,
                normalized,
                batch_stats,
            } => {
                let (outer, c, inner) = channel_view(node.value.shape());
                let gam = self.value(*gamma).data();
                let m = T::from_usize(outer * inner).expect("count");
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for o in 0..outer {
                    for ch in 0..c {
                        let base = (o * c + ch) * inner;
                        for i in base..base + inner {
                            dgamma[ch] = dgamma[ch] + g[i] * normalized[i];
                            dbeta[ch] = dbeta[ch] + g[i];
                        }
                    }
                }
                if needs(*input) {
                    let mut dx = vec![T::zero(); g.len()];
                    for o in 0..outer {
                        for ch in 0..c {
                            let base = (o * c + ch) * inner;
                            let scale = gam[ch] * inv_std[ch];
                            for i in base..base + inner {
                                dx[i] = if *batch_stats {
                                    // dxhat = g * gamma; sums over the channel are
                                    // dbeta * gamma and dgamma * gamma.
                                    scale
                                        * (g[i] - dbeta[ch] / m - normalized[i] * dgamma[ch] / m)
                                } else {
                                    scale * g[i]
                                };
                            }
                        }
                    }
                    accumulate(*input, dx);
                }
                if needs(*gamma) {
                    accumulate(*gamma, dgamma);
                }
                if needs(*beta) {
                    accumulate(*beta, dbeta);
                }
            }
            Op::MaskedMse {
                pred,
                residual,
                count,
            } => {
                let k = g[0] * (T::one() + T::one()) / *count;
                accumulate(*pred, residual.iter().map(|&r| r * k).collect());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn activations_at_known_points() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[0.0, 0.0, -3.0]));
        let s = g.sigmoid(x);
        let th = g.tanh(x);
        let r = g.relu(x);
        assert_eq!(g.value(s).data()[0], 0.5);
        assert_eq!(g.value(th).data()[0], 0.0);
        assert_eq!(g.value(r).data()[2], 0.0);
    }

    #[test]
    fn pointwise_product() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::new(vec![2], vec![2.0, 3.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2], vec![4.0, 5.0]).unwrap());
        let c = g.mul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[8.0, 15.0]);
    }

    #[test]
    fn binary_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[3]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let p = g.param(t(&[2], &[1.0, 2.0]));
        let c = g.constant(Tensor::scalar(3.0));
        let loss = g.sigmoid(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[0.0, 0.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn shared_tensor_gradients_accumulate() {
        // loss = sum(x * x + x) => d/dx = 2x + 1
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.5, -2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.add(sq, x).unwrap();
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0, -3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn even_kernel_is_config_error() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 4, 4]));
        let k = g.constant(Tensor::zeros(&[1, 1, 2, 3]));
        assert!(matches!(g.conv2d_same(x, k, None), Err(Error::Config(_))));
        let k = g.constant(Tensor::zeros(&[1, 2, 3, 3]));
        assert!(matches!(g.conv2d_same(x, k, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn all_ones_kernel_on_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let k = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d_same(x, k, Some(b)).unwrap();
        let v = g.value(y);
        assert_eq!(v.get(&[0, 0, 1, 1]).unwrap(), 9.0);
        assert_eq!(v.get(&[0, 0, 0, 0]).unwrap(), 4.0);
        assert_eq!(v.get(&[0, 0, 0, 1]).unwrap(), 6.0);
    }

    #[test]
    fn identity_kernels() {
        let mut g = Graph::<f32>::new();
        let data = Tensor::from_fn(&[2, 1, 3, 4], |i| i as f32 * 0.5 - 1.0);
        let x = g.constant(data.clone());
        let k = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d_same(x, k, Some(b)).unwrap();
        assert_eq!(g.value(y), &data);

        let data = Tensor::from_fn(&[1, 1, 2, 3, 4], |i| i as f32);
        let x = g.constant(data.clone());
        let k = g.constant(Tensor::full(&[1, 1, 1, 1, 1], 1.0));
        let y = g.conv3d_same(x, k, None).unwrap();
        assert_eq!(g.value(y), &data);
    }

    #[test]
    fn impulse_response_3d() {
        let mut g = Graph::<f64>::new();
        let mut x = Tensor::zeros(&[1, 1, 3, 4, 4]);
        x.set(&[0, 0, 0, 0, 1], 1.0).unwrap();
        let x = g.constant(x);
        let k = g.constant(Tensor::full(&[1, 1, 3, 3, 3], 1.0));
        let y = g.conv3d_same(x, k, None).unwrap();
        let v = g.value(y);
        for z in 0..3 {
            for r in 0..4 {
                for c in 0..4 {
                    let inside = z <= 1 && r <= 1 && c <= 2;
                    let expected = if inside { 1.0 } else { 0.0 };
                    assert_eq!(v.get(&[0, 0, z, r, c]).unwrap(), expected, "{z} {r} {c}");
                }
            }
        }
        assert_eq!(v.data().iter().sum::<f64>(), 12.0);
    }

    #[test]
    fn batch_norm_hand_example() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2, 1], &[1.0, 3.0]));
        let gamma = g.constant(t(&[1], &[2.0]));
        let beta = g.constant(t(&[1], &[1.0]));
        let (y, stats) = g
            .batch_norm(x, gamma, beta, NormStats::Batch { epsilon: 0.0 })
            .unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, 3.0]);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var, vec![1.0]);
    }

    #[test]
    fn masked_mse_examples() {
        let mut g = Graph::<f64>::new();
        let p = g.param(t(&[2], &[0.5, 0.5]));
        let loss = g.masked_mse(p, &t(&[2], &[0.0, 1.0]), &[true, true]).unwrap();
        assert_eq!(g.value(loss).data(), &[0.25]);
        let loss2 = g.masked_mse(p, &t(&[2], &[0.0, 9.0]), &[true, false]).unwrap();
        assert_eq!(g.value(loss2).data(), &[0.25]);
        assert!(g.masked_mse(p, &t(&[2], &[0.0, 0.0]), &[false, false]).is_err());
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[0.5, -0.5]);
    }

    #[test]
    fn slicing_concat_and_time_roundtrip() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_fn(&[2, 3, 2, 2, 2], |i| i as f64));
        let a = g.slice_channels(x, 0, 1).unwrap();
        let b = g.slice_channels(x, 1, 2).unwrap();
        let cat = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(g.value(cat), g.value(x));
        let frames: Vec<Var> = (0..2).map(|t| g.time_slice(cat, t).unwrap()).collect();
        let back = g.stack_time(&frames).unwrap();
        assert_eq!(g.value(back).data(), g.value(x).data());
        let loss = g.sum(back);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }
}
