//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of a forward pass as a node in
//! creation order, which is already a topological order. [`Graph::backward`]
//! walks the tape once in reverse and returns one gradient per trainable
//! parameter of the borrowed [`ParamStore`].
//!
//! Sequence tensors are batched `B×T×C` blocks carrying a valid length per
//! batch item. Every sequence op reads only the valid rows of its input and
//! zero-fills the padded rows of its output, so padding never leaks into a
//! pooled result or into a gradient.
//!
//! ```
//! use gkw_core::autodiff::{Graph, ParamStore};
//! use gkw_core::tensor::Tensor;
//!
//! let mut store = ParamStore::<f64>::new();
//! let p = store.push("p", Tensor::scalar(3.0));
//! let mut g = Graph::new(&store);
//! let x = g.param(p);
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! let grads = g.backward(loss, 1.0).unwrap();
//! assert_eq!(grads.get(p).data()[0], 6.0);
//! ```

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Named trainable tensors in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Parameter gradients returned by [`Graph::backward`], aligned with the
/// store's declaration order. Parameters the loss does not depend on get a
/// zero gradient.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    grads: Vec<Tensor<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.grads[id.0]
    }

    pub fn as_slice(&self) -> &[Tensor<F>] {
        &self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

enum Value<F> {
    Owned(Tensor<F>),
    Param(usize),
}

enum Op<F> {
    Leaf,
    Param(usize),
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    MaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    GlobalMaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    LogSumExpPool {
        input: NodeId,
        weights: Vec<F>,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    SigmoidBce {
        logits: NodeId,
        targets: Vec<F>,
    },
    Mul(NodeId, NodeId),
    Sum(NodeId),
}

struct Node<F> {
    value: Value<F>,
    lengths: Option<Vec<usize>>,
    op: Op<F>,
}

/// The computation record of one forward pass.
pub struct Graph<'p, F> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
}

impl<'p, F: Real> Graph<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => &self.params.tensors[*i],
        }
    }

    /// Valid lengths of a sequence node, `None` for non-sequence nodes.
    pub fn lengths(&self, id: NodeId) -> Option<&[usize]> {
        self.nodes[id.0].lengths.as_deref()
    }

    fn push(
        &mut self,
        name: &str,
        value: Tensor<F>,
        lengths: Option<Vec<usize>>,
        op: Op<F>,
    ) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            lengths,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: Value::Param(id.0),
            lengths: None,
            op: Op::Param(id.0),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<F>) -> Result<NodeId> {
        self.push("input", value, None, Op::Leaf)
    }

    /// A padded batch of sequences: `value` is `B×T×C`, `lengths[b]` rows of
    /// item `b` are valid.
    pub fn sequence(&mut self, value: Tensor<F>, lengths: Vec<usize>) -> Result<NodeId> {
        let shape = value.shape();
        if shape.len() != 3
            || lengths.len() != shape[0]
            || lengths.iter().any(|&l| l == 0 || l > shape[1])
        {
            return Err(Error::ShapeMismatch {
                op: "sequence",
                left: shape.to_vec(),
                right: lengths,
            });
        }
        self.push("sequence", value, Some(lengths), Op::Leaf)
    }

    fn seq_dims(&self, id: NodeId, op: &'static str) -> Result<(usize, usize, usize, Vec<usize>)> {
        let shape = self.value(id).shape();
        match (&self.nodes[id.0].lengths, shape) {
            (Some(l), &[b, t, c]) => Ok((b, t, c, l.clone())),
            _ => Err(Error::ShapeMismatch {
                op,
                left: shape.to_vec(),
                right: vec![],
            }),
        }
    }

    /// Valid (unpadded) stride-1 convolution over time spanning all channels.
    /// `weight` is `K×w×D`, `bias` is `K`.
    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (batch, t_in, dim, lengths) = self.seq_dims(input, "conv1d")?;
        let wshape = self.value(weight).shape().to_vec();
        let (filters, width) = match wshape.as_slice() {
            &[k, w, d] if d == dim && self.value(bias).shape() == [k] => (k, w),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "conv1d",
                    left: vec![batch, t_in, dim],
                    right: wshape,
                })
            }
        };
        if let Some((b, &len)) = lengths.iter().enumerate().find(|(_, &l)| l < width) {
            return Err(Error::InvalidInput(format!(
                "sequence {b} has {len} frames but convolution width is {width}"
            )));
        }
        let t_out = t_in - width + 1;
        let mut out = vec![F::zero(); batch * t_out * filters];
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let bvec = self.value(bias).data();
        let valid: usize = lengths.iter().map(|&l| l - width + 1).sum();
        let rows = batch * t_in - width + 1;
        if rows <= 8 * valid {
            // One product over the whole batch: row `b·t_in + t` of `full`
            // is output `t` of item `b`; rows past an item's valid length
            // straddle padding or the next item and are dropped.
            let mut full = vec![F::zero(); rows * filters];
            kernels::conv_forward(x, dim, rows, w, bvec, width, filters, &mut full);
            for (b, &len) in lengths.iter().enumerate() {
                let n = (len - width + 1) * filters;
                let src = b * t_in * filters;
                out[b * t_out * filters..b * t_out * filters + n].copy_from_slice(&full[src..src + n]);
            }
        } else {
            for (b, &len) in lengths.iter().enumerate() {
                kernels::conv_forward(
                    &x[b * t_in * dim..(b + 1) * t_in * dim],
                    dim,
                    len - width + 1,
                    w,
                    bvec,
                    width,
                    filters,
                    &mut out[b * t_out * filters..(b + 1) * t_out * filters],
                );
            }
        }
        let out_lengths = lengths.iter().map(|&l| l - width + 1).collect();
        let value = Tensor::from_vec(&[batch, t_out, filters], out)?;
        self.push(
            "conv1d",
            value,
            Some(out_lengths),
            Op::Conv1d {
                input,
                weight,
                bias,
            },
        )
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(F::zero())).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let lengths = self.nodes[input.0].lengths.clone();
        self.push("relu", value, lengths, Op::Relu(input))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| kernels::sigmoid(v)).collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let lengths = self.nodes[input.0].lengths.clone();
        self.push("sigmoid", value, lengths, Op::Sigmoid(input))
    }

    /// Non-overlapping max pooling over time with stride equal to `size`.
    pub fn max_pool1d(&mut self, input: NodeId, size: usize) -> Result<NodeId> {
        if size == 0 {
            return Err(Error::Config("pool size must be at least 1".into()));
        }
        let (batch, t_in, chans, lengths) = self.seq_dims(input, "max_pool1d")?;
        let t_out = t_in.div_ceil(size);
        let mut out = vec![F::zero(); batch * t_out * chans];
        let mut argmax = vec![0usize; batch * t_out * chans];
        let mut out_lengths = Vec::with_capacity(batch);
        {
            let x = self.value(input).data();
            for (b, &len) in lengths.iter().enumerate() {
                let n = kernels::max_pool_forward(
                    &x[b * t_in * chans..(b + 1) * t_in * chans],
                    len,
                    chans,
                    size,
                    &mut out[b * t_out * chans..(b + 1) * t_out * chans],
                    &mut argmax[b * t_out * chans..(b + 1) * t_out * chans],
                );
                out_lengths.push(n);
            }
        }
        let value = Tensor::from_vec(&[batch, t_out, chans], out)?;
        self.push(
            "max_pool1d",
            value,
            Some(out_lengths),
            Op::MaxPool { input, argmax },
        )
    }

    /// Max over all valid time steps: `B×T×C → B×C`.
    pub fn global_max_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let (batch, t_in, chans, lengths) = self.seq_dims(input, "global_max_pool")?;
        let mut out = vec![F::zero(); batch * chans];
        let mut argmax = vec![0usize; batch * chans];
        {
            let x = self.value(input).data();
            for (b, &len) in lengths.iter().enumerate() {
                kernels::max_pool_forward(
                    &x[b * t_in * chans..(b + 1) * t_in * chans],
                    len,
                    chans,
                    len,
                    &mut out[b * chans..(b + 1) * chans],
                    &mut argmax[b * chans..(b + 1) * chans],
                );
            }
        }
        let value = Tensor::from_vec(&[batch, chans], out)?;
        self.push(
            "global_max_pool",
            value,
            None,
            Op::GlobalMaxPool { input, argmax },
        )
    }

    /// Logsumexp pooling with sharpness `r` over all valid time steps:
    /// `B×T×C → B×C`.
    pub fn logsumexp_pool(&mut self, input: NodeId, r: F) -> Result<NodeId> {
        if !(r > F::zero()) || !r.is_finite() {
            return Err(Error::Config(format!(
                "logsumexp pooling sharpness must be positive, got {r}"
            )));
        }
        let (batch, t_in, chans, lengths) = self.seq_dims(input, "logsumexp_pool")?;
        let mut out = vec![F::zero(); batch * chans];
        let mut weights = vec![F::zero(); batch * t_in * chans];
        {
            let x = self.value(input).data();
            for (b, &len) in lengths.iter().enumerate() {
                let span = b * t_in * chans..(b + 1) * t_in * chans;
                kernels::logsumexp_pool_forward(
                    &x[span.clone()],
                    len,
                    chans,
                    r,
                    &mut out[b * chans..(b + 1) * chans],
                    &mut weights[span],
                );
            }
        }
        let value = Tensor::from_vec(&[batch, chans], out)?;
        self.push(
            "logsumexp_pool",
            value,
            None,
            Op::LogSumExpPool { input, weights },
        )
    }

    /// Affine map `B×N → B×M` with `weight` `M×N` and `bias` `M`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xshape = self.value(input).shape().to_vec();
        let wshape = self.value(weight).shape().to_vec();
        let (batch, n_in, n_out) = match (xshape.as_slice(), wshape.as_slice()) {
            (&[b, n], &[m, n2]) if n == n2 && self.value(bias).shape() == [m] => (b, n, m),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "dense",
                    left: xshape,
                    right: wshape,
                })
            }
        };
        let mut out = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            out.extend_from_slice(self.value(bias).data());
        }
        F::gemm(
            batch,
            n_in,
            n_out,
            F::one(),
            self.value(input).data(),
            n_in as isize,
            1,
            self.value(weight).data(),
            1,
            n_in as isize,
            F::one(),
            &mut out,
            n_out as isize,
            1,
        );
        let value = Tensor::from_vec(&[batch, n_out], out)?;
        self.push(
            "dense",
            value,
            None,
            Op::Dense {
                input,
                weight,
                bias,
            },
        )
    }

    /// Mean over the batch of the summed per-word cross-entropy between
    /// `sigmoid(logits)` and soft `targets` (both `B×W`). Predictions are
    /// clamped to `[eps, 1 − eps]` before the logarithms.
    pub fn sigmoid_bce(&mut self, logits: NodeId, targets: &Tensor<F>, eps: F) -> Result<NodeId> {
        let shape = self.value(logits).shape().to_vec();
        if shape.len() != 2 || targets.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "sigmoid_bce",
                left: shape,
                right: targets.shape().to_vec(),
            });
        }
        let batch = F::from_usize(shape[0]).expect("batch fits");
        let loss = self
            .value(logits)
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&s, &y)| {
                let f = kernels::sigmoid(s).max(eps).min(F::one() - eps);
                -(y * f.ln() + (F::one() - y) * (F::one() - f).ln())
            })
            .sum::<F>()
            / batch;
        self.push(
            "sigmoid_bce",
            Tensor::scalar(loss),
            None,
            Op::SigmoidBce {
                logits,
                targets: targets.data().to_vec(),
            },
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(va.shape(), data)?;
        self.push("mul", value, None, Op::Mul(a, b))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(total), None, Op::Sum(a))
    }

    /// Propagates `seed · ∂loss/∂node` backward from a scalar node.
    pub fn backward(&self, loss: NodeId, seed: F) -> Result<Gradients<F>> {
        let loss_shape = self.value(loss).shape();
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarSeed(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_shape, seed));
        let mut param_grads: Vec<Tensor<F>> = self
            .params
            .tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        let mut scratch = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => param_grads[*p].add_assign(&gout),
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let g = gout
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(&g, &v)| if v > F::zero() { g } else { F::zero() })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::from_vec(gout.shape(), g)?);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(NodeId(idx)).data();
                    let g = gout
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(&g, &s)| g * s * (F::one() - s))
                        .collect();
                    accumulate(&mut grads, *x, Tensor::from_vec(gout.shape(), g)?);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let ga = gout.data().iter().zip(vb).map(|(&g, &v)| g * v).collect();
                    let gb = gout.data().iter().zip(va).map(|(&g, &v)| g * v).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(gout.shape(), ga)?);
                    accumulate(&mut grads, *b, Tensor::from_vec(gout.shape(), gb)?);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape();
                    accumulate(&mut grads, *a, Tensor::full(shape, gout.data()[0]));
                }
                Op::SigmoidBce { logits, targets } => {
                    let s = self.value(*logits);
                    let scale = gout.data()[0] / F::from_usize(s.shape()[0]).expect("batch fits");
                    let g = s
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&v, &y)| (kernels::sigmoid(v) - y) * scale)
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::from_vec(s.shape(), g)?);
                }
                Op::MaxPool { input, argmax } | Op::GlobalMaxPool { input, argmax } => {
                    let in_shape = self.value(*input).shape();
                    let (t_in, chans) = (in_shape[1], in_shape[2]);
                    let out_shape = gout.shape();
                    let per_item = out_shape[1..].iter().product::<usize>();
                    let lengths = match &node.lengths {
                        Some(l) => l.clone(),
                        None => vec![1; in_shape[0]],
                    };
                    let mut gx = Tensor::zeros(in_shape);
                    let gxd = gx.data_mut();
                    for (b, &len) in lengths.iter().enumerate() {
                        for j in 0..len * chans {
                            let o = b * per_item + j;
                            let c = j % chans;
                            gxd[(b * t_in + argmax[o]) * chans + c] += gout.data()[o];
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::LogSumExpPool { input, weights } => {
                    let in_shape = self.value(*input).shape();
                    let (t_in, chans) = (in_shape[1], in_shape[2]);
                    let mut gx = Tensor::zeros(in_shape);
                    for (i, (g, &w)) in gx.data_mut().iter_mut().zip(weights).enumerate() {
                        let b = i / (t_in * chans);
                        let c = i % chans;
                        *g = w * gout.data()[b * chans + c];
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (batch, n_in) = (x.shape()[0], x.shape()[1]);
                    let n_out = w.shape()[0];
                    let g = gout.data();
                    let mut gw = Tensor::zeros(w.shape());
                    F::gemm(
                        n_out,
                        batch,
                        n_in,
                        F::one(),
                        g,
                        1,
                        n_out as isize,
                        x.data(),
                        n_in as isize,
                        1,
                        F::zero(),
                        gw.data_mut(),
                        n_in as isize,
                        1,
                    );
                    let mut gb = Tensor::zeros(&[n_out]);
                    for row in g.chunks_exact(n_out) {
                        for (a, &v) in gb.data_mut().iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    if self.needs_grad(*input) {
                        let mut gx = Tensor::zeros(x.shape());
                        F::gemm(
                            batch,
                            n_out,
                            n_in,
                            F::one(),
                            g,
                            n_out as isize,
                            1,
                            w.data(),
                            n_in as isize,
                            1,
                            F::zero(),
                            gx.data_mut(),
                            n_in as isize,
                            1,
                        );
                        accumulate(&mut grads, *input, gx);
                    }
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (t_in, dim) = (x.shape()[1], x.shape()[2]);
                    let (filters, width) = (w.shape()[0], w.shape()[1]);
                    let t_out = gout.shape()[1];
                    let lengths = node.lengths.as_ref().expect("conv output is a sequence");
                    let mut gw = Tensor::zeros(w.shape());
                    let mut gb = Tensor::zeros(&[filters]);
                    let want_x = self.needs_grad(*input);
                    let mut gx = want_x.then(|| Tensor::zeros(x.shape()));
                    let rows = lengths.len() * t_in - width + 1;
                    let valid: usize = lengths.iter().sum();
                    if rows <= 8 * valid {
                        let mut gfull = vec![F::zero(); rows * filters];
                        for (b, &len) in lengths.iter().enumerate() {
                            let n = len * filters;
                            let dst = b * t_in * filters;
                            gfull[dst..dst + n]
                                .copy_from_slice(&gout.data()[b * t_out * filters..b * t_out * filters + n]);
                        }
                        kernels::conv_backward(
                            x.data(),
                            dim,
                            rows,
                            w.data(),
                            width,
                            filters,
                            &gfull,
                            gw.data_mut(),
                            gb.data_mut(),
                            gx.as_mut().map(|t| t.data_mut()),
                            &mut scratch,
                        );
                    } else {
                        for (b, &len) in lengths.iter().enumerate() {
                            kernels::conv_backward(
                                &x.data()[b * t_in * dim..(b + 1) * t_in * dim],
                                dim,
                                len,
                                w.data(),
                                width,
                                filters,
                                &gout.data()[b * t_out * filters..(b + 1) * t_out * filters],
                                gw.data_mut(),
                                gb.data_mut(),
                                gx.as_mut()
                                    .map(|t| &mut t.data_mut()[b * t_in * dim..(b + 1) * t_in * dim]),
                                &mut scratch,
                            );
                        }
                    }
                    if let Some(gx) = gx {
                        accumulate(&mut grads, *input, gx);
                    }
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
            }
        }

        for (i, g) in param_grads.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {}",
                    self.params.names[i]
                )));
            }
        }
        Ok(Gradients { grads: param_grads })
    }

    /// Inputs (data leaves) never need gradients; everything downstream of a
    /// parameter does.
    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Leaf)
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], id: NodeId, g: Tensor<F>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}
