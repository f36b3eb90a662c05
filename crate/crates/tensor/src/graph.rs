//! Tape-based reverse-mode differentiation over a closed operator set.
//!
//! Every operator call evaluates eagerly and appends a node; node order is creation
//! order, so inputs always precede their consumers and the tape is acyclic.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_extent, Result, TensorError};
use crate::kernels::{self, BatchNormMode, BatchNormSaved};
use crate::real::Real;
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: BatchNormSaved<T>,
    },
    Relu(Var),
    AvgPool3(Var),
    PartitionPool(Var),
    Broadcast {
        input: Var,
        rows: usize,
        cols: usize,
    },
    ModalitySoftmax(Vec<Var>),
    Select {
        input: Var,
        index: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    Sum(Var),
    /// Loss reductions keep their per-element derivative from the forward pass.
    ElementLoss {
        input: Var,
        derivative: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Relu(_) => "relu",
            Op::AvgPool3(_) => "avg_pool3x3",
            Op::PartitionPool(_) => "partition_avg_pool",
            Op::Broadcast { .. } => "broadcast_partition_weights",
            Op::ModalitySoftmax(_) => "modality_softmax",
            Op::Select { .. } => "select",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Concat(_) => "concat_channels",
            Op::Sum(_) => "sum",
            Op::ElementLoss { .. } => "element_loss",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation. One graph per forward pass.
pub struct Graph<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operator names in topological (creation) order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn check(&self, v: Var) -> Result<&Node<T>> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::UnrecordedVar);
        }
        Ok(&self.nodes[v.index])
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor<T>> {
        self.check(v).map(|n| &n.value)
    }

    /// Panics if `v` was recorded on another graph.
    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.try_value(v).expect("variable recorded on this graph")
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index,
        }
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let x = self.try_value(input)?;
        let w = self.try_value(weight)?;
        let b = bias.map(|b| self.try_value(b)).transpose()?;
        let out = kernels::conv2d_forward(x, w, b, stride, pad)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            rg,
        ))
    }

    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, mode: BatchNormMode<'_, T>, eps: T) -> Result<Var> {
        let (out, saved) = kernels::batchnorm_forward(
            self.try_value(input)?,
            self.try_value(gamma)?,
            self.try_value(beta)?,
            mode,
            eps,
        )?;
        let rg = self.any_grad(&[input, gamma, beta]);
        Ok(self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let out = self.try_value(input)?.map(|v| v.max(T::zero()));
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Relu(input), rg))
    }

    pub fn avg_pool3(&mut self, input: Var) -> Result<Var> {
        let out = kernels::avg_pool3_forward(self.try_value(input)?)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::AvgPool3(input), rg))
    }

    pub fn partition_avg_pool(&mut self, input: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = kernels::partition_pool_forward(self.try_value(input)?, rows, cols)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::PartitionPool(input), rg))
    }

    pub fn broadcast_partitions(&mut self, input: Var, height: usize, width: usize) -> Result<Var> {
        let x = self.try_value(input)?;
        let (_, _, rows, cols) = x.dims4("broadcast_partition_weights")?;
        let out = kernels::broadcast_forward(x, height, width)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Broadcast { input, rows, cols }, rg))
    }

    /// Softmax across modalities at every coordinate; returns one weight tensor per input.
    pub fn modality_softmax(&mut self, logits: &[Var]) -> Result<Vec<Var>> {
        let values = logits
            .iter()
            .map(|&v| self.try_value(v))
            .collect::<Result<Vec<_>>>()?;
        let stacked = kernels::modality_softmax_forward(&values)?;
        let parts = (0..logits.len())
            .map(|m| stacked.slab(m))
            .collect::<Result<Vec<_>>>()?;
        let rg = self.any_grad(logits);
        let stack = self.push(stacked, Op::ModalitySoftmax(logits.to_vec()), rg);
        Ok(parts
            .into_iter()
            .enumerate()
            .map(|(index, value)| self.push(value, Op::Select { input: stack, index }, rg))
            .collect())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.try_value(a)?.shape(), self.try_value(b)?.shape());
        if sa.len() != sb.len() {
            return Err(TensorError::RankMismatch {
                op,
                expected: sa.len(),
                actual: sb.len(),
            });
        }
        for (axis, (&x, &y)) in sa.iter().zip(sb).enumerate() {
            check_extent(op, format!("axis {axis}"), x, y)?;
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let out = self.try_value(input)?.map(|v| v * factor);
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Scale(input, factor), rg))
    }

    /// Sum of several same-shaped values, left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms.split_first().ok_or_else(|| TensorError::InvalidArgument {
            op: "add",
            reason: "no terms".into(),
        })?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = self.try_value(*inputs.first().ok_or_else(|| TensorError::InvalidArgument {
            op: "concat_channels",
            reason: "empty input list".into(),
        })?)?;
        let (n, _, h, w) = first.dims4("concat_channels")?;
        let mut channels = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let (vn, vc, vh, vw) = self.try_value(v)?.dims4("concat_channels")?;
            check_extent("concat_channels", "batch", n, vn)?;
            check_extent("concat_channels", "height", h, vh)?;
            check_extent("concat_channels", "width", w, vw)?;
            channels.push(vc);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for (&v, &c) in inputs.iter().zip(&channels) {
                let src = self.value(v).data();
                data.extend_from_slice(&src[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let out = Tensor::new(vec![n, total, h, w], data)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(out, Op::Concat(inputs.to_vec()), rg))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let out = Tensor::scalar(self.try_value(input)?.sum());
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Sum(input), rg))
    }

    /// `sum_i weight_i * FL(logit_i, target_i) / normalizer` (sigmoid focal loss).
    pub fn sigmoid_focal_loss(
        &mut self,
        logits: Var,
        targets: &[T],
        weights: &[T],
        alpha: T,
        gamma: T,
        normalizer: T,
    ) -> Result<Var> {
        let x = self.try_value(logits)?;
        check_extent("sigmoid_focal_loss", "targets", x.len(), targets.len())?;
        check_extent("sigmoid_focal_loss", "weights", x.len(), weights.len())?;
        let mut total = T::zero();
        let scale = T::one() / normalizer;
        let mut derivative = vec![T::zero(); x.len()];
        for (((&l, &t), &w), d) in x.data().iter().zip(targets).zip(weights).zip(&mut derivative) {
            if w != T::zero() {
                let (loss, dl) = kernels::focal_term(l, t, alpha, gamma);
                total += w * loss;
                *d = w * dl * scale;
            }
        }
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / normalizer),
            Op::ElementLoss {
                input: logits,
                derivative,
            },
            rg,
        ))
    }

    /// `sum_i weight_i * huber(pred_i - target_i) / normalizer`.
    pub fn huber_loss(&mut self, pred: Var, targets: &[T], weights: &[T], delta: T, normalizer: T) -> Result<Var> {
        if delta <= T::zero() {
            return Err(TensorError::InvalidArgument {
                op: "huber_loss",
                reason: format!("delta must be positive, got {delta}"),
            });
        }
        let x = self.try_value(pred)?;
        check_extent("huber_loss", "targets", x.len(), targets.len())?;
        check_extent("huber_loss", "weights", x.len(), weights.len())?;
        let mut total = T::zero();
        let mut derivative = Vec::with_capacity(x.len());
        for ((&p, &t), &w) in x.data().iter().zip(targets).zip(weights) {
            if w == T::zero() {
                derivative.push(T::zero());
                continue;
            }
            let (loss, d) = kernels::huber_term(p - t, delta);
            total += w * loss;
            derivative.push(w * d / normalizer);
        }
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            Tensor::scalar(total / normalizer),
            Op::ElementLoss {
                input: pred,
                derivative,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`; gradients are summed at fan-out.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let node = self.check(loss)?;
        if node.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::full(node.value.shape(), T::one()));

        for i in (0..=loss.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let need_b = bias.is_some_and(|b| self.wants(b));
                let cg = kernels::conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    g,
                    *stride,
                    *pad,
                    (self.wants(*input), self.wants(*weight), need_b),
                )?;
                accumulate(grads, *input, cg.input);
                accumulate(grads, *weight, cg.weight);
                if let Some(b) = bias {
                    accumulate(grads, *b, cg.bias);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            } => {
                let (dx, dg, db) = kernels::batchnorm_backward(self.value(*input).shape(), self.value(*gamma), saved, g);
                accumulate(grads, *input, self.wants(*input).then_some(dx));
                accumulate(grads, *gamma, self.wants(*gamma).then_some(dg));
                accumulate(grads, *beta, self.wants(*beta).then_some(db));
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                    .collect();
                accumulate(grads, *input, Some(Tensor::new(x.shape().to_vec(), data)?));
            }
            Op::AvgPool3(input) => accumulate(grads, *input, Some(kernels::avg_pool3_backward(g))),
            Op::PartitionPool(input) => {
                let s = self.value(*input).shape();
                accumulate(grads, *input, Some(kernels::partition_pool_backward(g, s[2], s[3])));
            }
            Op::Broadcast { input, rows, cols } => {
                accumulate(grads, *input, Some(kernels::broadcast_backward(g, *rows, *cols)));
            }
            Op::ModalitySoftmax(inputs) => {
                // the stacked node's gradient was assembled by its Select children
                let m = inputs.len();
                let inner: Vec<Tensor<T>> = (0..m).map(|k| g.slab(k)).collect::<Result<_>>()?;
                let refs: Vec<Option<&Tensor<T>>> = inner.iter().map(Some).collect();
                let dx = kernels::modality_softmax_backward(&node.value, &refs);
                for (v, d) in inputs.iter().zip(dx) {
                    accumulate(grads, *v, self.wants(*v).then_some(d));
                }
            }
            Op::Select { input, index } => {
                let stack_shape = self.value(*input).shape().to_vec();
                let slot = g.len();
                let entry = grads[input.index].get_or_insert_with(|| Tensor::zeros(&stack_shape));
                for (d, &s) in entry.data_mut()[index * slot..(index + 1) * slot]
                    .iter_mut()
                    .zip(g.data())
                {
                    *d += s;
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, self.wants(*a).then(|| g.clone()));
                accumulate(grads, *b, self.wants(*b).then(|| g.clone()));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
                    accumulate(grads, *a, Some(Tensor::new(x.shape().to_vec(), d)?));
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(x.data()).map(|(&p, &q)| p * q).collect();
                    accumulate(grads, *b, Some(Tensor::new(y.shape().to_vec(), d)?));
                }
            }
            Op::Scale(input, factor) => accumulate(grads, *input, Some(g.map(|v| v * *factor))),
            Op::Concat(inputs) => {
                let (n, total, h, w) = g.dims4("concat_channels")?;
                let plane = h * w;
                let mut offset = 0;
                for v in inputs {
                    let c = self.value(*v).shape()[1];
                    if self.wants(*v) {
                        let mut d = Vec::with_capacity(n * c * plane);
                        for b in 0..n {
                            let start = (b * total + offset) * plane;
                            d.extend_from_slice(&g.data()[start..start + c * plane]);
                        }
                        accumulate(grads, *v, Some(Tensor::new(vec![n, c, h, w], d)?));
                    }
                    offset += c;
                }
            }
            Op::Sum(input) => {
                let s = self.value(*input).shape();
                accumulate(grads, *input, Some(Tensor::full(s, g.item())));
            }
            Op::ElementLoss { input, derivative } => {
                let s = self.value(*input).shape().to_vec();
                let scale = g.item();
                let d = derivative.iter().map(|&v| v * scale).collect();
                accumulate(grads, *input, Some(Tensor::new(s, d)?));
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], target: Var, delta: Option<Tensor<T>>) {
    let Some(delta) = delta else { return };
    match &mut grads[target.index] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += *d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Gradients of a scalar loss with respect to leaf values.
pub struct Gradients<T> {
    graph: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// `None` when `v` does not influence the loss or is not a trainable leaf.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get_mut(v.index).and_then(Option::take)
    }
}
