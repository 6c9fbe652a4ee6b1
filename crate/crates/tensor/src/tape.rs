//! Wengert-list gradient tape.
//!
//! Every op appends a node holding its forward value and the handles of its
//! inputs, so nodes are topologically ordered by construction. `backward`
//! walks the list in reverse and accumulates adjoints in a fixed order, which
//! keeps gradients bit-reproducible.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Result, TensorError};
use crate::ops::{self, align, elementwise, resample, stencil, Padding, ShiftMinMode};
use crate::tensor::{compensated_sum, Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, padding: Padding },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Abs(Var),
    Scale(Var, f64),
    Mean(Var),
    Sum(Var),
    DotConst(Var, Tensor),
    ChannelMean(Var),
    Concat(Vec<Var>),
    Softmax(Var),
    SpaceToChannel(Var, usize),
    PixelShuffle(Var, usize),
    SpatialGradient(Var),
    ResizeBilinear(Var),
    BoxDownsample(Var, usize),
    Pwpac { features: Var, map: Var, radius: usize },
    ShiftMinAbs { pred: Var, reference: Var, radius: usize, stride: usize, argmin: Vec<u16> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> Shape {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownVar(var.0))
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (a parameter or an input under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: Padding) -> Result<Var> {
        for v in [input, kernel, bias] {
            self.check(v)?;
        }
        let out = ops::conv2d(self.value(input), self.value(kernel), self.value(bias), padding)?;
        Ok(self.push(out, Op::Conv2d { input, kernel, bias, padding }, &[input, kernel, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::relu(self.value(x));
        Ok(self.push(out, Op::Relu(x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = elementwise::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = elementwise::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = elementwise::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::abs(self.value(x));
        Ok(self.push(out, Op::Abs(x), &[x]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::scale(self.value(x), factor)?;
        Ok(self.push(out, Op::Scale(x, factor), &[x]))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::mean(self.value(x))?;
        Ok(self.push(out, Op::Mean(x), &[x]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = Tensor::scalar(self.value(x).sum()).ensure_finite("sum")?;
        Ok(self.push(out, Op::Sum(x), &[x]))
    }

    /// `sum(x * weights)` with constant `weights`; used to project outputs to a scalar.
    pub fn dot_const(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::dot_const(self.value(x), &weights)?;
        Ok(self.push(out, Op::DotConst(x, weights), &[x]))
    }

    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::channel_mean(self.value(x));
        Ok(self.push(out, Op::ChannelMean(x), &[x]))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = elementwise::concat_channels(&values)?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = elementwise::softmax_channels(self.value(x))?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    pub fn space_to_channel(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.check(x)?;
        let out = ops::space_to_channel(self.value(x), factor)?;
        Ok(self.push(out, Op::SpaceToChannel(x, factor), &[x]))
    }

    pub fn pixel_shuffle(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.check(x)?;
        let out = ops::pixel_shuffle(self.value(x), factor)?;
        Ok(self.push(out, Op::PixelShuffle(x, factor), &[x]))
    }

    pub fn spatial_gradient(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = stencil::spatial_gradient(self.value(x))?;
        Ok(self.push(out, Op::SpatialGradient(x), &[x]))
    }

    pub fn resize_bilinear(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        self.check(x)?;
        let out = resample::resize_bilinear(self.value(x), height, width)?;
        Ok(self.push(out, Op::ResizeBilinear(x), &[x]))
    }

    pub fn box_downsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.check(x)?;
        let out = resample::box_downsample(self.value(x), factor)?;
        Ok(self.push(out, Op::BoxDownsample(x, factor), &[x]))
    }

    pub fn pwpac(&mut self, features: Var, map: Var, radius: usize) -> Result<Var> {
        self.check(features)?;
        self.check(map)?;
        let out = align::pwpac(self.value(features), self.value(map), radius)?;
        Ok(self.push(out, Op::Pwpac { features, map, radius }, &[features, map]))
    }

    pub fn shift_min_abs(
        &mut self,
        pred: Var,
        reference: Var,
        radius: usize,
        stride: usize,
        mode: ShiftMinMode,
    ) -> Result<Var> {
        self.check(pred)?;
        self.check(reference)?;
        let res = align::shift_min_abs(self.value(pred), self.value(reference), radius, stride, mode)?;
        let op = Op::ShiftMinAbs {
            pred,
            reference,
            radius,
            stride,
            argmin: res.argmin,
        };
        Ok(self.push(res.values, op, &[pred, reference]))
    }

    /// Fingerprint of every discrete choice made in the forward pass: ReLU
    /// masks, signs under `abs` and shift-minimum winners. Two evaluations
    /// with equal fingerprints lie on the same smooth piece of the graph.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &v in self.value(*x).data() {
                        (v > 0.0).hash(&mut h);
                    }
                }
                Op::Abs(x) => {
                    for &v in self.value(*x).data() {
                        (v.partial_cmp(&0.0)).hash(&mut h);
                    }
                }
                Op::ShiftMinAbs { pred, reference, radius, stride, argmin } => {
                    argmin.hash(&mut h);
                    let signs = align::shift_min_signs(self.value(*pred), self.value(*reference), argmin, *radius, *stride);
                    signs.hash(&mut h);
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// `value(out)` on this tape minus its value on `other`, where both tapes
    /// recorded the same graph from different leaf values.
    ///
    /// Scalar sums, scales and reductions are differenced term by term, so
    /// elements that agree bitwise cancel exactly instead of through the
    /// rounded totals. Falls back to the plain difference when the graphs
    /// differ.
    pub fn difference(&self, other: &Tape, out: Var) -> f64 {
        let plain = |v: Var| self.value(v).data()[0] - other.value(v).data()[0];
        if self.nodes.len() != other.nodes.len() || !self.shape(out).is_scalar() {
            return plain(out);
        }
        let deltas = |x: Var| {
            let (a, b) = (self.value(x).data(), other.value(x).data());
            a.iter().zip(b).map(|(p, m)| p - m).collect::<Vec<_>>()
        };
        match &self.nodes[out.0].op {
            Op::Add(a, b) if self.shape(*a).is_scalar() && self.shape(*b).is_scalar() => {
                self.difference(other, *a) + self.difference(other, *b)
            }
            Op::Sub(a, b) if self.shape(*a).is_scalar() && self.shape(*b).is_scalar() => {
                self.difference(other, *a) - self.difference(other, *b)
            }
            Op::Scale(a, c) if self.shape(*a).is_scalar() => c * self.difference(other, *a),
            Op::Mean(x) => compensated_sum(deltas(*x)) / self.shape(*x).len() as f64,
            Op::Sum(x) => compensated_sum(deltas(*x)),
            Op::DotConst(x, w) => compensated_sum(deltas(*x).into_iter().zip(w.data()).map(|(d, w)| d * w)),
            _ => plain(out),
        }
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every differentiable leaf receives a gradient of its own shape (zeros
    /// when the loss does not depend on it).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let loss_shape = self.shape(loss);
        if !loss_shape.is_scalar() {
            return Err(TensorError::NotScalar(loss_shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_shape, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut send = |v: Var, t: Tensor| {
            if self.needs(v) {
                accumulate(&mut grads[v.0], t);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, padding } => {
                let needs = [self.needs(*input), self.needs(*kernel), self.needs(*bias)];
                let (di, dk, db) =
                    ops::conv::conv2d_backward(self.value(*input), self.value(*kernel), *padding, g, needs);
                if let Some(t) = di {
                    send(*input, t);
                }
                if let Some(t) = dk {
                    send(*kernel, t);
                }
                if let Some(t) = db {
                    send(*bias, t);
                }
            }
            Op::Relu(x) => send(*x, elementwise::relu_backward(self.value(*x), g)),
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    send(*a, elementwise::mul(g, bv).expect("same shape"));
                }
                if self.needs(*b) {
                    send(*b, elementwise::mul(g, av).expect("same shape"));
                }
            }
            Op::Abs(x) => send(*x, elementwise::abs_backward(self.value(*x), g)),
            Op::Scale(x, f) => send(*x, g.map(|v| v * f)),
            Op::Mean(x) => send(*x, elementwise::mean_backward(self.shape(*x), g.data()[0])),
            Op::Sum(x) => send(*x, Tensor::full(self.shape(*x), g.data()[0])),
            Op::DotConst(x, w) => {
                let s = g.data()[0];
                send(*x, w.map(|v| v * s));
            }
            Op::ChannelMean(x) => send(*x, elementwise::channel_mean_backward(self.shape(*x), g)),
            Op::Concat(parts) => {
                let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p).channels()).collect();
                for (p, t) in parts.iter().zip(elementwise::concat_channels_backward(&widths, g)) {
                    send(*p, t);
                }
            }
            Op::Softmax(x) => send(*x, elementwise::softmax_channels_backward(&node.value, g)),
            Op::SpaceToChannel(x, f) => send(*x, ops::pixel_shuffle(g, *f).expect("inverse shape")),
            Op::PixelShuffle(x, f) => send(*x, ops::space_to_channel(g, *f).expect("inverse shape")),
            Op::SpatialGradient(x) => send(*x, stencil::spatial_gradient_backward(g)),
            Op::ResizeBilinear(x) => send(*x, resample::resize_bilinear_backward(self.shape(*x), g)),
            Op::BoxDownsample(x, f) => send(*x, resample::box_downsample_backward(self.shape(*x), *f, g)),
            Op::Pwpac { features, map, radius } => {
                let needs = [self.needs(*features), self.needs(*map)];
                let (df, dm) = align::pwpac_backward(self.value(*features), self.value(*map), *radius, g, needs);
                if let Some(t) = df {
                    send(*features, t);
                }
                if let Some(t) = dm {
                    send(*map, t);
                }
            }
            Op::ShiftMinAbs { pred, reference, radius, stride, argmin } => {
                let needs = [self.needs(*pred), self.needs(*reference)];
                let (dp, dr) = align::shift_min_abs_backward(
                    self.value(*pred),
                    self.value(*reference),
                    argmin,
                    *radius,
                    *stride,
                    g,
                    needs,
                );
                if let Some(t) = dp {
                    send(*pred, t);
                }
                if let Some(t) = dr {
                    send(*reference, t);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(Shape::new(1, 2, 3, 2), |_, y, x, c| (y + x + c) as f64));
        let loss = tape.dot_const(x, Tensor::full(Shape::new(1, 2, 3, 2), 1.0)).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sum_of_squares_gives_twice_x() {
        let mut tape = Tape::new();
        let xv = Tensor::from_fn(Shape::new(1, 2, 2, 1), |_, y, x, _| (y * 2 + x) as f64 - 1.5);
        let x = tape.leaf(xv.clone());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &xv.map(|v| 2.0 * v));
    }

    #[test]
    fn difference_cancels_unchanged_terms() {
        let build = |bump: f64| {
            let mut tape = Tape::new();
            let mut v = Tensor::full(Shape::new(1, 10, 10, 1), 1.0e3);
            v.data_mut()[7] += bump;
            let x = tape.leaf(v);
            let m = tape.mean(x).unwrap();
            let s = tape.scale(m, 4.0).unwrap();
            (tape, s)
        };
        let (plus, out) = build(1e-9);
        let (minus, _) = build(-1e-9);
        let d = plus.difference(&minus, out);
        let exact = 4.0 * ((1.0e3 + 1e-9) - (1.0e3 - 1e-9)) / 100.0;
        assert_eq!(d, exact);
    }

    #[test]
    fn shift_min_sign_flip_changes_signature() {
        let run = |p: f64| {
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::full(Shape::new(1, 1, 1, 1), p));
            let b = tape.constant(Tensor::full(Shape::new(1, 1, 1, 1), 0.5));
            tape.shift_min_abs(a, b, 1, 1, ShiftMinMode::PerChannel).unwrap();
            tape.branch_signature()
        };
        assert_eq!(run(0.6), run(0.7));
        assert_ne!(run(0.6), run(0.4));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 2, 2, 1)));
        assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn unreached_leaves_get_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(Shape::vector(3), 1.0));
        let y = tape.leaf(Tensor::full(Shape::new(1, 2, 1, 1), 1.0));
        let loss = tape.mean(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(y).unwrap(), &Tensor::zeros(Shape::new(1, 2, 1, 1)));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::full(Shape::vector(2), 3.0));
        let x = tape.leaf(Tensor::full(Shape::vector(2), 1.0));
        let s = tape.add(c, x).unwrap();
        let loss = tape.mean(s).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5]);
    }
}
