//! Reverse-mode differentiation over a linear operation tape.
//!
//! Every forward primitive appends one node holding its result, so the tape is
//! topologically ordered by construction. [`Tape::backward`] replays the nodes
//! in reverse, visiting each exactly once and accumulating gradients into the
//! operand slots; gradients of shared subexpressions therefore add up. The
//! whole pass is sequential and deterministic: replaying the same tape twice
//! yields bit-identical gradients.
//!
//! Elementwise binary ops broadcast in exactly one pattern: a rank-1 `[c]`
//! right operand is repeated across the rows of a rank-2 `[r, c]` left
//! operand. Anything else is a shape error; keeping the rule this small keeps
//! every gradient rule auditable.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static TAPE_STAMP: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    ScaleRows(usize, usize),
    RowSum(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    Concat(usize, usize, usize),
    Slice {
        input: usize,
        axis: usize,
        start: usize,
        len: usize,
    },
    Mse(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    WeightedSum(usize, Vec<f64>),
    BceWithLogits(usize, usize),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Records forward primitives and replays them backward.
pub struct Tape {
    stamp: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            stamp: TAPE_STAMP.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId {
            tape: self.stamp,
            index: self.nodes.len() - 1,
        }
    }

    fn resolve(&self, id: NodeId, op: &'static str) -> Result<usize> {
        if id.tape != self.stamp || id.index >= self.nodes.len() {
            return Err(Error::Invalid(format!("{op}: node is not on this tape")));
        }
        Ok(id.index)
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        let i = self.resolve(id, "value")?;
        Ok(&self.nodes[i].value)
    }

    /// Registers a differentiable leaf (a model parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Registers a non-differentiable input (data, targets, initial states).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> NodeId {
        self.constant(Tensor::zeros(shape))
    }

    fn finish(
        &mut self,
        op: Op,
        value: Tensor,
        needs_grad: bool,
        name: &'static str,
    ) -> Result<NodeId> {
        value.check_finite(name)?;
        Ok(self.push(op, value, needs_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ia = self.resolve(a, "matmul")?;
        let ib = self.resolve(b, "matmul")?;
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let ng = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        self.finish(Op::MatMul(ia, ib), value, ng, "matmul")
    }

    /// `true` when `b` is a rank-1 row broadcast against rank-2 `a`.
    fn broadcast_kind(a: &Tensor, b: &Tensor, op: &'static str) -> Result<bool> {
        if a.shape() == b.shape() {
            Ok(false)
        } else if a.rank() == 2 && b.rank() == 1 && a.cols() == b.len() {
            Ok(true)
        } else {
            Err(Error::shape(
                op,
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ))
        }
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<NodeId> {
        let ia = self.resolve(a, name)?;
        let ib = self.resolve(b, name)?;
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let bcast = Tape::broadcast_kind(ta, tb, name)?;
        let cols = ta.cols();
        let bd = tb.data();
        let data: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &av)| f(av, if bcast { bd[i % cols] } else { bd[i] }))
            .collect();
        let value = Tensor::raw(ta.shape().to_vec(), data);
        let ng = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        self.finish(make(ia, ib), value, ng, name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product; the right operand may be a rank-1 row broadcast.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Scales row `i` of `m` by `v[i]`. `v` is rank-1 `[r]` or a column `[r, 1]`.
    pub fn scale_rows(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let im = self.resolve(m, "scale_rows")?;
        let iv = self.resolve(v, "scale_rows")?;
        let (tm, tv) = (&self.nodes[im].value, &self.nodes[iv].value);
        if tm.rank() != 2 || tv.len() != tm.rows() || tv.cols() != 1 {
            return Err(Error::shape(
                "scale_rows",
                format!("{:?} vs {:?}", tm.shape(), tv.shape()),
            ));
        }
        let mut data = Vec::with_capacity(tm.len());
        for (i, &sv) in tv.data().iter().enumerate() {
            data.extend(tm.row(i).iter().map(|&x| x * sv));
        }
        let value = Tensor::raw(tm.shape().to_vec(), data);
        let ng = self.nodes[im].needs_grad || self.nodes[iv].needs_grad;
        self.finish(Op::ScaleRows(im, iv), value, ng, "scale_rows")
    }

    /// Sums each row of a rank-2 tensor into a rank-1 vector.
    pub fn row_sum(&mut self, m: NodeId) -> Result<NodeId> {
        let im = self.resolve(m, "row_sum")?;
        let tm = &self.nodes[im].value;
        if tm.rank() != 2 {
            return Err(Error::shape("row_sum", format!("{:?}", tm.shape())));
        }
        let data: Vec<f64> = (0..tm.rows()).map(|i| tm.row(i).iter().sum()).collect();
        let value = Tensor::raw(vec![tm.rows()], data);
        let ng = self.nodes[im].needs_grad;
        self.finish(Op::RowSum(im), value, ng, "row_sum")
    }

    fn unary(
        &mut self,
        x: NodeId,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        make: impl Fn(usize) -> Op,
    ) -> Result<NodeId> {
        let ix = self.resolve(x, name)?;
        let value = self.nodes[ix].value.map(&f);
        let ng = self.nodes[ix].needs_grad;
        self.finish(make(ix), value, ng, name)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "tanh", f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "sigmoid", sigmoid, Op::Sigmoid)
    }

    /// Softmax along the last axis (per row for rank-2), computed with
    /// max-subtraction. Outputs are strictly positive and sum to 1 per row.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x, "softmax")?;
        let tx = &self.nodes[ix].value;
        if tx.is_empty() {
            return Err(Error::shape("softmax", "empty tensor"));
        }
        let cols = if tx.rank() == 2 { tx.cols() } else { tx.len() };
        let mut data = Vec::with_capacity(tx.len());
        for chunk in tx.data().chunks(cols) {
            let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = chunk.iter().map(|&v| (v - max).exp()).collect();
            let norm: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|&e| e / norm));
        }
        let value = Tensor::raw(tx.shape().to_vec(), data);
        let ng = self.nodes[ix].needs_grad;
        self.finish(Op::Softmax(ix), value, ng, "softmax")
    }

    /// Concatenates two tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let ia = self.resolve(a, "concat")?;
        let ib = self.resolve(b, "concat")?;
        let (ta, tb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let value = match (ta.rank(), tb.rank(), axis) {
            (1, 1, 0) => {
                let mut data = ta.data().to_vec();
                data.extend_from_slice(tb.data());
                Tensor::raw(vec![ta.len() + tb.len()], data)
            }
            (2, 2, 0) if ta.cols() == tb.cols() => {
                let mut data = ta.data().to_vec();
                data.extend_from_slice(tb.data());
                Tensor::raw(vec![ta.rows() + tb.rows(), ta.cols()], data)
            }
            (2, 2, 1) if ta.rows() == tb.rows() => {
                let mut data = Vec::with_capacity(ta.len() + tb.len());
                for i in 0..ta.rows() {
                    data.extend_from_slice(ta.row(i));
                    data.extend_from_slice(tb.row(i));
                }
                Tensor::raw(vec![ta.rows(), ta.cols() + tb.cols()], data)
            }
            _ => {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} and {:?} along axis {axis}", ta.shape(), tb.shape()),
                ))
            }
        };
        let ng = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        self.finish(Op::Concat(ia, ib, axis), value, ng, "concat")
    }

    /// Takes `len` indices starting at `start` along `axis`.
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let ix = self.resolve(x, "slice")?;
        let tx = &self.nodes[ix].value;
        let bad = || {
            Error::shape(
                "slice",
                format!(
                    "[{start}, {start}+{len}) along axis {axis} of {:?}",
                    tx.shape()
                ),
            )
        };
        let value = match (tx.rank(), axis) {
            (1, 0) if start + len <= tx.len() => {
                Tensor::raw(vec![len], tx.data()[start..start + len].to_vec())
            }
            (2, 0) if start + len <= tx.rows() => {
                let c = tx.cols();
                Tensor::raw(
                    vec![len, c],
                    tx.data()[start * c..(start + len) * c].to_vec(),
                )
            }
            (2, 1) if start + len <= tx.cols() => {
                let mut data = Vec::with_capacity(len * tx.rows());
                for i in 0..tx.rows() {
                    data.extend_from_slice(&tx.row(i)[start..start + len]);
                }
                Tensor::raw(vec![tx.rows(), len], data)
            }
            _ => return Err(bad()),
        };
        let ng = self.nodes[ix].needs_grad;
        self.finish(
            Op::Slice {
                input: ix,
                axis,
                start,
                len,
            },
            value,
            ng,
            "slice",
        )
    }

    /// Mean over rows of the squared Euclidean norm of `pred - target`:
    /// `sum((pred - target)^2) / nrows`. For rank-1 operands every entry is a
    /// row, giving the plain mean of squares.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let ip = self.resolve(pred, "mse")?;
        let it = self.resolve(target, "mse")?;
        let (tp, tt) = (&self.nodes[ip].value, &self.nodes[it].value);
        if tp.shape() != tt.shape() {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", tp.shape(), tt.shape()),
            ));
        }
        if tp.is_empty() {
            return Err(Error::shape("mse", "empty tensor"));
        }
        let rows = tp.rows() as f64;
        let sum: f64 = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let ng = self.nodes[ip].needs_grad || self.nodes[it].needs_grad;
        self.finish(Op::Mse(ip, it), Tensor::scalar(sum / rows), ng, "mse")
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: NodeId, k: f64) -> Result<NodeId> {
        let ix = self.resolve(x, "scale")?;
        let value = self.nodes[ix].value.scaled(k);
        let ng = self.nodes[ix].needs_grad;
        self.finish(Op::Scale(ix, k), value, ng, "scale")
    }

    /// Sum of all entries.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let ix = self.resolve(x, "sum")?;
        let total: f64 = self.nodes[ix].value.data().iter().sum();
        let ng = self.nodes[ix].needs_grad;
        self.finish(Op::Sum(ix), Tensor::scalar(total), ng, "sum")
    }

    /// Dot product with a constant weight vector; used for patient-weighted
    /// corpus losses where each window carries weight 1/(patients * windows).
    pub fn weighted_sum(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId> {
        let ix = self.resolve(x, "weighted_sum")?;
        let tx = &self.nodes[ix].value;
        if tx.len() != weights.len() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} entries vs {} weights", tx.len(), weights.len()),
            ));
        }
        let total: f64 = tx.data().iter().zip(weights).map(|(&v, &w)| v * w).sum();
        let ng = self.nodes[ix].needs_grad;
        self.finish(
            Op::WeightedSum(ix, weights.to_vec()),
            Tensor::scalar(total),
            ng,
            "weighted_sum",
        )
    }

    /// Numerically stable mean binary cross-entropy on logits:
    /// `mean(max(z, 0) - z*y + ln(1 + exp(-|z|)))`.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId> {
        let iz = self.resolve(logits, "bce_with_logits")?;
        let iy = self.resolve(targets, "bce_with_logits")?;
        let (tz, ty) = (&self.nodes[iz].value, &self.nodes[iy].value);
        if tz.shape() != ty.shape() || tz.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{:?} vs {:?}", tz.shape(), ty.shape()),
            ));
        }
        let n = tz.len() as f64;
        let sum: f64 = tz
            .data()
            .iter()
            .zip(ty.data())
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let ng = self.nodes[iz].needs_grad || self.nodes[iy].needs_grad;
        self.finish(
            Op::BceWithLogits(iz, iy),
            Tensor::scalar(sum / n),
            ng,
            "bce_with_logits",
        )
    }

    /// Reverse pass from a scalar loss. Gradients are retained for leaf nodes
    /// only; a leaf that did not participate in the loss reads back as zero.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let start = self.resolve(loss, "backward")?;
        let loss_node = &self.nodes[start];
        if !loss_node.value.is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", loss_node.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[start] = Some(Tensor::scalar(1.0));

        for idx in (0..=start).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients {
            stamp: self.stamp,
            grads,
        })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if self.nodes[*a].needs_grad {
                    accumulate(grads, *a, g.matmul_nt(tb)?)?;
                }
                if self.nodes[*b].needs_grad {
                    accumulate(grads, *b, ta.matmul_tn(g)?)?;
                }
            }
            Op::Add(a, b) => {
                if self.nodes[*a].needs_grad {
                    accumulate(grads, *a, g.clone())?;
                }
                if self.nodes[*b].needs_grad {
                    let gb = reduce_to(&self.nodes[*b].value, g, 1.0);
                    accumulate(grads, *b, gb)?;
                }
            }
            Op::Sub(a, b) => {
                if self.nodes[*a].needs_grad {
                    accumulate(grads, *a, g.clone())?;
                }
                if self.nodes[*b].needs_grad {
                    let gb = reduce_to(&self.nodes[*b].value, g, -1.0);
                    accumulate(grads, *b, gb)?;
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let same = ta.shape() == tb.shape();
                let cols = ta.cols();
                if self.nodes[*a].needs_grad {
                    let bd = tb.data();
                    let data = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * if same { bd[i] } else { bd[i % cols] })
                        .collect();
                    accumulate(grads, *a, Tensor::raw(ta.shape().to_vec(), data))?;
                }
                if self.nodes[*b].needs_grad {
                    if same {
                        let data = g
                            .data()
                            .iter()
                            .zip(ta.data())
                            .map(|(&gv, &av)| gv * av)
                            .collect();
                        accumulate(grads, *b, Tensor::raw(tb.shape().to_vec(), data))?;
                    } else {
                        let mut data = vec![0.0; cols];
                        for (i, (&gv, &av)) in g.data().iter().zip(ta.data()).enumerate() {
                            data[i % cols] += gv * av;
                        }
                        accumulate(grads, *b, Tensor::raw(tb.shape().to_vec(), data))?;
                    }
                }
            }
            Op::ScaleRows(m, v) => {
                let (tm, tv) = (&self.nodes[*m].value, &self.nodes[*v].value);
                if self.nodes[*m].needs_grad {
                    let mut data = Vec::with_capacity(tm.len());
                    for (i, &sv) in tv.data().iter().enumerate() {
                        data.extend(g.row(i).iter().map(|&gv| gv * sv));
                    }
                    accumulate(grads, *m, Tensor::raw(tm.shape().to_vec(), data))?;
                }
                if self.nodes[*v].needs_grad {
                    let data: Vec<f64> = (0..tm.rows())
                        .map(|i| {
                            g.row(i)
                                .iter()
                                .zip(tm.row(i))
                                .map(|(&gv, &mv)| gv * mv)
                                .sum()
                        })
                        .collect();
                    accumulate(grads, *v, Tensor::raw(tv.shape().to_vec(), data))?;
                }
            }
            Op::RowSum(m) => {
                if self.nodes[*m].needs_grad {
                    let tm = &self.nodes[*m].value;
                    let cols = tm.cols();
                    let mut data = Vec::with_capacity(tm.len());
                    for &gv in g.data() {
                        data.extend(std::iter::repeat(gv).take(cols));
                    }
                    accumulate(grads, *m, Tensor::raw(tm.shape().to_vec(), data))?;
                }
            }
            Op::Tanh(x) => {
                if self.nodes[*x].needs_grad {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * (1.0 - yv * yv))
                        .collect();
                    accumulate(grads, *x, Tensor::raw(y.shape().to_vec(), data))?;
                }
            }
            Op::Sigmoid(x) => {
                if self.nodes[*x].needs_grad {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                        .collect();
                    accumulate(grads, *x, Tensor::raw(y.shape().to_vec(), data))?;
                }
            }
            Op::Softmax(x) => {
                if self.nodes[*x].needs_grad {
                    let y = &node.value;
                    let cols = if y.rank() == 2 { y.cols() } else { y.len() };
                    let mut data = Vec::with_capacity(y.len());
                    for (grow, yrow) in g.data().chunks(cols).zip(y.data().chunks(cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                        data.extend(grow.iter().zip(yrow).map(|(&gv, &yv)| yv * (gv - dot)));
                    }
                    accumulate(grads, *x, Tensor::raw(y.shape().to_vec(), data))?;
                }
            }
            Op::Concat(a, b, axis) => {
                let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (ga, gb) = split_concat_grad(ta, tb, g, *axis);
                if self.nodes[*a].needs_grad {
                    accumulate(grads, *a, ga)?;
                }
                if self.nodes[*b].needs_grad {
                    accumulate(grads, *b, gb)?;
                }
            }
            Op::Slice {
                input,
                axis,
                start: s,
                len,
            } => {
                if self.nodes[*input].needs_grad {
                    let tx = &self.nodes[*input].value;
                    let mut out = Tensor::zeros(tx.shape());
                    match (tx.rank(), *axis) {
                        (1, 0) => {
                            out.data_mut()[*s..*s + *len].copy_from_slice(g.data());
                        }
                        (2, 0) => {
                            let c = tx.cols();
                            out.data_mut()[*s * c..(*s + *len) * c].copy_from_slice(g.data());
                        }
                        (2, 1) => {
                            let c = tx.cols();
                            for i in 0..tx.rows() {
                                out.data_mut()[i * c + *s..i * c + *s + *len]
                                    .copy_from_slice(g.row(i));
                            }
                        }
                        _ => unreachable!("validated at record time"),
                    }
                    accumulate(grads, *input, out)?;
                }
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (&self.nodes[*p].value, &self.nodes[*t].value);
                let k = 2.0 * g.scalar_value()? / tp.rows() as f64;
                if self.nodes[*p].needs_grad {
                    let data = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .map(|(&pv, &tv)| k * (pv - tv))
                        .collect();
                    accumulate(grads, *p, Tensor::raw(tp.shape().to_vec(), data))?;
                }
                if self.nodes[*t].needs_grad {
                    let data = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .map(|(&pv, &tv)| -k * (pv - tv))
                        .collect();
                    accumulate(grads, *t, Tensor::raw(tt.shape().to_vec(), data))?;
                }
            }
            Op::Scale(x, k) => {
                if self.nodes[*x].needs_grad {
                    accumulate(grads, *x, g.scaled(*k))?;
                }
            }
            Op::Sum(x) => {
                if self.nodes[*x].needs_grad {
                    let tx = &self.nodes[*x].value;
                    accumulate(grads, *x, Tensor::filled(tx.shape(), g.scalar_value()?))?;
                }
            }
            Op::WeightedSum(x, w) => {
                if self.nodes[*x].needs_grad {
                    let tx = &self.nodes[*x].value;
                    let gs = g.scalar_value()?;
                    let data = w.iter().map(|&wv| wv * gs).collect();
                    accumulate(grads, *x, Tensor::raw(tx.shape().to_vec(), data))?;
                }
            }
            Op::BceWithLogits(z, y) => {
                let (tz, ty) = (&self.nodes[*z].value, &self.nodes[*y].value);
                let gs = g.scalar_value()? / tz.len() as f64;
                if self.nodes[*z].needs_grad {
                    let data = tz
                        .data()
                        .iter()
                        .zip(ty.data())
                        .map(|(&zv, &yv)| gs * (sigmoid(zv) - yv))
                        .collect();
                    accumulate(grads, *z, Tensor::raw(tz.shape().to_vec(), data))?;
                }
                if self.nodes[*y].needs_grad {
                    let data = tz.data().iter().map(|&zv| -gs * zv).collect();
                    accumulate(grads, *y, Tensor::raw(ty.shape().to_vec(), data))?;
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], i: usize, t: Tensor) -> Result<()> {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => {
            *slot = Some(t);
            Ok(())
        }
    }
}

/// Collapses a full-shape gradient back onto a broadcast rank-1 operand.
fn reduce_to(operand: &Tensor, g: &Tensor, sign: f64) -> Tensor {
    if operand.shape() == g.shape() {
        return g.scaled(sign);
    }
    let cols = operand.len();
    let mut data = vec![0.0; cols];
    for (i, &gv) in g.data().iter().enumerate() {
        data[i % cols] += sign * gv;
    }
    Tensor::raw(operand.shape().to_vec(), data)
}

fn split_concat_grad(ta: &Tensor, tb: &Tensor, g: &Tensor, axis: usize) -> (Tensor, Tensor) {
    match (ta.rank(), axis) {
        (1, 0) | (2, 0) => {
            let split = ta.len();
            (
                Tensor::raw(ta.shape().to_vec(), g.data()[..split].to_vec()),
                Tensor::raw(tb.shape().to_vec(), g.data()[split..].to_vec()),
            )
        }
        (2, 1) => {
            let (ca, cb) = (ta.cols(), tb.cols());
            let mut da = Vec::with_capacity(ta.len());
            let mut db = Vec::with_capacity(tb.len());
            for i in 0..ta.rows() {
                let row = g.row(i);
                da.extend_from_slice(&row[..ca]);
                db.extend_from_slice(&row[ca..ca + cb]);
            }
            (
                Tensor::raw(ta.shape().to_vec(), da),
                Tensor::raw(tb.shape().to_vec(), db),
            )
        }
        _ => unreachable!("validated at record time"),
    }
}

/// Per-leaf gradients from one backward pass.
pub struct Gradients {
    stamp: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf, or `None` when the leaf
    /// did not participate in the loss.
    pub fn get(&self, id: NodeId) -> Result<Option<&Tensor>> {
        if id.tape != self.stamp || id.index >= self.grads.len() {
            return Err(Error::Invalid(
                "gradient lookup: node is not on this tape".into(),
            ));
        }
        Ok(self.grads[id.index].as_ref())
    }

    /// Like [`Gradients::get`] but materializes zeros of the given shape for
    /// non-participating leaves.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Result<Tensor> {
        Ok(match self.get(id)? {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_uniform_and_known_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap());
        let y = tape.softmax(x).unwrap();
        for &v in tape.value(y).unwrap().data() {
            assert!(close(v, 1.0 / 3.0, 1e-15));
        }

        // Frozen from direct high-precision evaluation of exp-normalize.
        let x = tape.constant(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.softmax(x).unwrap();
        let expect = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
        for (&got, &want) in tape.value(y).unwrap().data().iter().zip(&expect) {
            assert!(close(got, want, 1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_shift_invariance_and_normalization() {
        let mut tape = Tape::new();
        let z = vec![0.3, -1.2, 2.5, 0.0, 4.1];
        let shifted: Vec<f64> = z.iter().map(|v| v + 17.5).collect();
        let a = tape.constant(Tensor::from_vec(&[5], z).unwrap());
        let b = tape.constant(Tensor::from_vec(&[5], shifted).unwrap());
        let sa = tape.softmax(a).unwrap();
        let sb = tape.softmax(b).unwrap();
        let (va, vb) = (tape.value(sa).unwrap(), tape.value(sb).unwrap());
        for (x, y) in va.data().iter().zip(vb.data()) {
            assert!(close(*x, *y, 1e-12));
        }
        let total: f64 = va.data().iter().sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(va.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn mse_at_equality_gives_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let loss = tape.mse(x, x).unwrap();
        assert_eq!(tape.value(loss).unwrap().scalar_value().unwrap(), 0.0);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(x).unwrap().unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_loss_gradient_is_constant() {
        // loss = sum(2 * p) => dloss/dp = 2 per entry.
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[3], vec![0.1, -0.7, 2.0]).unwrap());
        let doubled = tape.scale(p, 2.0).unwrap();
        let loss = tape.sum(doubled).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(p).unwrap().unwrap();
        assert_eq!(g.data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn shared_subexpression_gradients_accumulate() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 4.0]).unwrap());
        let twice = tape.add(a, a).unwrap();
        let loss = tape.sum(twice).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn non_participating_leaf_reads_back_zero() {
        let mut tape = Tape::new();
        let used = tape.leaf(Tensor::scalar(2.0));
        let unused = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap());
        let loss = tape.sum(used).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(unused).unwrap().is_none());
        let z = grads.get_or_zeros(unused, &[2]).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_bit_identical() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(&[2, 2], vec![0.3, -0.4, 0.9, 0.12]).unwrap());
        let x = tape.constant(Tensor::from_vec(&[1, 2], vec![1.5, -2.0]).unwrap());
        let h = tape.matmul(x, w).unwrap();
        let y = tape.tanh(h).unwrap();
        let t = tape.zeros(&[1, 2]);
        let loss = tape.mse(y, t).unwrap();
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        let (a, b) = (
            g1.get(w).unwrap().unwrap().data(),
            g2.get(w).unwrap().unwrap().data(),
        );
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn cross_tape_node_is_rejected() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.leaf(Tensor::scalar(1.0));
        let b = t2.leaf(Tensor::scalar(1.0));
        assert!(t2.value(a).is_err());
        assert!(t2.add(a, b).is_err());
        let loss = t2.sum(b).unwrap();
        let grads = t2.backward(loss).unwrap();
        assert!(grads.get(a).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn shape_mismatch_names_offending_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4]"), "{err}");
    }

    #[test]
    fn non_finite_result_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(&[1], vec![1e308]).unwrap());
        let err = tape.add(a, a).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::from_vec(&[2, 3], vec![5.0; 6]).unwrap());
        let joined = tape.concat(a, b, 1).unwrap();
        assert_eq!(tape.value(joined).unwrap().shape(), &[2, 5]);
        let back = tape.slice(joined, 1, 0, 2).unwrap();
        let loss = tape.sum(back).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().unwrap().data(), &[1.0; 4]);
        assert!(grads.get(b).unwrap().unwrap().data().iter().all(|&v| v == 0.0));
    }
}
