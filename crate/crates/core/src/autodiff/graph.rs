use std::cell::{Ref, RefCell};
use std::fmt;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    BatchMatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Powf(usize, f64),
    BroadcastTo(usize),
    SumTo(usize),
    ExpandLast(usize),
    SumLast(usize),
    SliceLast(usize, usize),
    PadLast(usize, usize),
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | BatchMatMul(a, b) => {
                [Some(a), Some(b)]
            }
            Scale(a, _) | AddScalar(a) | Transpose(a) | Reshape(a) | Tanh(a) | Relu(a)
            | Exp(a) | Powf(a, _) | BroadcastTo(a) | SumTo(a) | ExpandLast(a) | SumLast(a)
            | SliceLast(a, _) | PadLast(a, _) => [Some(a), None],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a computation.
///
/// Nodes are pushed in evaluation order, so every node's inputs precede it
/// and the record is acyclic by construction. The graph is retained after
/// [`Graph::grad`]: gradients are themselves nodes of the same graph and can
/// be differentiated again, and `grad` may be called any number of times.
///
/// A graph is single-threaded (`!Sync`); independent computations use
/// independent graphs.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input (parameter, or an input we need derivatives
    /// with respect to).
    pub fn leaf(&self, value: Tensor) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        Ok(self.push(value, Op::Leaf, true))
    }

    /// A non-differentiable input. Gradients never flow into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn record(&self, name: &'static str, value: Tensor, op: Op) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.inputs()
                .iter()
                .flatten()
                .any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push(value, op, requires_grad))
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse-mode derivative of the scalar `output` with respect to each
    /// node in `wrt`.
    ///
    /// The returned gradients are graph nodes, so they can feed further
    /// computation and be differentiated again. A `wrt` node that `output`
    /// does not depend on gets a zero gradient rather than an error.
    /// Derivatives may be taken with respect to any node, constants and
    /// intermediate results included.
    pub fn grad(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<Var<'_>>> {
        self.check_same(output)?;
        for w in wrt {
            self.check_same(*w)?;
        }
        let out_shape = output.shape();
        if !out_shape.is_empty() {
            return Err(Error::NotScalar(out_shape));
        }
        let end = output.id + 1;

        // Nodes on some path from a `wrt` node to `output`.
        let mut relevant = vec![false; end];
        {
            let nodes = self.nodes.borrow();
            for w in wrt {
                if w.id < end {
                    relevant[w.id] = true;
                }
            }
            for i in 0..end {
                if !relevant[i] {
                    relevant[i] = nodes[i]
                        .op
                        .inputs()
                        .iter()
                        .flatten()
                        .any(|&j| relevant[j]);
                }
            }
        }

        let mut adjoint: Vec<Option<usize>> = vec![None; end];
        adjoint[output.id] = Some(self.constant(Tensor::scalar(1.0)).id);

        for i in (0..end).rev() {
            if !relevant[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            let g = Var { graph: self, id: g };
            let out = Var { graph: self, id: i };
            let contributions = self.vjp(&op, out, g, &relevant)?;
            for (input, contribution) in contributions.into_iter().flatten() {
                adjoint[input] = Some(match adjoint[input] {
                    None => contribution.id,
                    Some(prev) => Var {
                        graph: self,
                        id: prev,
                    }
                    .add(contribution)?
                    .id,
                });
            }
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.id).copied().flatten() {
                Some(id) => Ok(Var { graph: self, id }),
                None => Ok(self.constant(Tensor::zeros(w.shape()))),
            })
            .collect()
    }

    /// Like [`Graph::grad`] but returns plain tensors.
    pub fn gradients(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<Tensor>> {
        Ok(self
            .grad(output, wrt)?
            .into_iter()
            .map(|v| v.value().clone())
            .collect())
    }

    fn vjp<'g>(
        &'g self,
        op: &Op,
        out: Var<'g>,
        g: Var<'g>,
        relevant: &[bool],
    ) -> Result<[Option<(usize, Var<'g>)>; 2]> {
        let var = |id| Var { graph: self, id };
        let want = |id: usize| relevant[id];
        let mut res: [Option<(usize, Var<'g>)>; 2] = [None, None];
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    res[0] = Some((a, g));
                }
                if want(b) {
                    res[1] = Some((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    res[0] = Some((a, g));
                }
                if want(b) {
                    res[1] = Some((b, g.scale(-1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    res[0] = Some((a, g.mul(var(b))?));
                }
                if want(b) {
                    res[1] = Some((b, g.mul(var(a))?));
                }
            }
            Op::Scale(a, c) => res[0] = Some((a, g.scale(c)?)),
            Op::AddScalar(a) => res[0] = Some((a, g)),
            Op::MatMul(a, b) => {
                if want(a) {
                    res[0] = Some((a, g.matmul(var(b).transpose()?)?));
                }
                if want(b) {
                    res[1] = Some((b, var(a).transpose()?.matmul(g)?));
                }
            }
            Op::BatchMatMul(a, b) => {
                if want(a) {
                    res[0] = Some((a, g.bmm(var(b).transpose()?)?));
                }
                if want(b) {
                    res[1] = Some((b, var(a).transpose()?.bmm(g)?));
                }
            }
            Op::Transpose(a) => res[0] = Some((a, g.transpose()?)),
            Op::Reshape(a) => res[0] = Some((a, g.reshape(var(a).shape())?)),
            Op::Tanh(a) => {
                let slope = out.mul(out)?.scale(-1.0)?.add_scalar(1.0)?;
                res[0] = Some((a, g.mul(slope)?));
            }
            Op::Relu(a) => {
                let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                res[0] = Some((a, g.mul(self.constant(mask))?));
            }
            Op::Exp(a) => res[0] = Some((a, g.mul(out)?)),
            Op::Powf(a, p) => {
                let d = var(a).powf(p - 1.0)?.scale(p)?;
                res[0] = Some((a, g.mul(d)?));
            }
            Op::BroadcastTo(a) => res[0] = Some((a, g.sum_to(&var(a).shape())?)),
            Op::SumTo(a) => res[0] = Some((a, g.broadcast_to(&var(a).shape())?)),
            Op::ExpandLast(a) => res[0] = Some((a, g.sum_last()?)),
            Op::SumLast(a) => {
                let n = self.value(a).last_dim();
                res[0] = Some((a, g.expand_last(n)?));
            }
            Op::SliceLast(a, start) => {
                let n = self.value(a).last_dim();
                let len = out.value().last_dim();
                res[0] = Some((a, g.pad_last(start, n - start - len)?));
            }
            Op::PadLast(a, before) => {
                let n = self.value(a).last_dim();
                res[0] = Some((a, g.slice_last(before, n)?));
            }
        }
        Ok(res)
    }

    fn check_same(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.graph) {
            Ok(())
        } else {
            Err(Error::Invalid("variable belongs to a different graph".into()))
        }
    }
}

fn same_graph(a: Var<'_>, b: Var<'_>, op: &'static str) -> Result<()> {
    if std::ptr::eq(a.graph, b.graph) {
        Ok(())
    } else {
        Err(Error::shape(op, "operands belong to different graphs"))
    }
}

fn is_suffix(suffix: &[usize], shape: &[usize]) -> bool {
    suffix.len() <= shape.len() && shape[shape.len() - suffix.len()..] == *suffix
}

impl<'g> Var<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    fn elementwise(
        self,
        other: Var<'g>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'g>> {
        same_graph(self, other, name)?;
        let value = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    name,
                    format!("{:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            a.zip(&b, f)
        };
        self.graph.record(name, value, op)
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'g>> {
        let value = self.value().map(f);
        self.graph.record(name, value, op)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.elementwise(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.elementwise(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.elementwise(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.mul(self)
    }

    pub fn scale(self, c: f64) -> Result<Var<'g>> {
        self.unary("scale", Op::Scale(self.id, c), |v| v * c)
    }

    pub fn neg(self) -> Result<Var<'g>> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'g>> {
        self.unary("add_scalar", Op::AddScalar(self.id), |v| v + c)
    }

    pub fn tanh(self) -> Result<Var<'g>> {
        self.unary("tanh", Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(self) -> Result<Var<'g>> {
        self.unary("relu", Op::Relu(self.id), |v| v.max(0.0))
    }

    pub fn exp(self) -> Result<Var<'g>> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn powf(self, p: f64) -> Result<Var<'g>> {
        self.unary("powf", Op::Powf(self.id, p), |v| v.powf(p))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        same_graph(self, other, "matmul")?;
        let value = {
            let a = self.value();
            let b = other.value();
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            Tensor::new(vec![m, n], gemm(a.data(), b.data(), m, k, n, false, false))?
        };
        self.graph
            .record("matmul", value, Op::MatMul(self.id, other.id))
    }

    /// Batched matrix product: `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn bmm(self, other: Var<'g>) -> Result<Var<'g>> {
        same_graph(self, other, "bmm")?;
        let value = {
            let a = self.value();
            let b = other.value();
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                return Err(Error::shape("bmm", format!("{sa:?} x {sb:?}")));
            }
            let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut data = Vec::with_capacity(batch * m * n);
            for p in 0..batch {
                let ab = &a.data()[p * m * k..(p + 1) * m * k];
                let bb = &b.data()[p * k * n..(p + 1) * k * n];
                data.extend(gemm(ab, bb, m, k, n, false, false));
            }
            Tensor::new(vec![batch, m, n], data)?
        };
        self.graph
            .record("bmm", value, Op::BatchMatMul(self.id, other.id))
    }

    /// Swap the last two axes.
    pub fn transpose(self) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            let s = a.shape();
            if s.len() < 2 {
                return Err(Error::shape("transpose", format!("rank {} < 2", s.len())));
            }
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            let batch = a.numel() / (r * c).max(1);
            let mut data = vec![0.0; a.numel()];
            let src = a.data();
            for p in 0..batch {
                let off = p * r * c;
                for i in 0..r {
                    for j in 0..c {
                        data[off + j * r + i] = src[off + i * c + j];
                    }
                }
            }
            let mut shape = s.to_vec();
            let n = shape.len();
            shape.swap(n - 2, n - 1);
            Tensor::new(shape, data)?
        };
        self.graph
            .record("transpose", value, Op::Transpose(self.id))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g>> {
        let value = self.value().clone().reshaped(shape)?;
        self.graph.record("reshape", value, Op::Reshape(self.id))
    }

    /// Repeat along leading axes; `self`'s shape must be a suffix of `shape`.
    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            if !is_suffix(a.shape(), shape) {
                return Err(Error::shape(
                    "broadcast_to",
                    format!("{:?} -> {shape:?}", a.shape()),
                ));
            }
            let m = a.numel();
            let total: usize = shape.iter().product();
            let mut data = Vec::with_capacity(total);
            for _ in 0..total / m.max(1) {
                data.extend_from_slice(a.data());
            }
            Tensor::new(shape.to_vec(), data)?
        };
        self.graph
            .record("broadcast_to", value, Op::BroadcastTo(self.id))
    }

    /// Sum over leading axes down to `shape`, which must be a suffix of
    /// `self`'s shape.
    pub fn sum_to(self, shape: &[usize]) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            if !is_suffix(shape, a.shape()) {
                return Err(Error::shape(
                    "sum_to",
                    format!("{:?} -> {shape:?}", a.shape()),
                ));
            }
            let m: usize = shape.iter().product();
            let mut data = vec![0.0; m];
            for chunk in a.data().chunks(m.max(1)) {
                for (d, v) in data.iter_mut().zip(chunk) {
                    *d += v;
                }
            }
            Tensor::new(shape.to_vec(), data)?
        };
        self.graph.record("sum_to", value, Op::SumTo(self.id))
    }

    pub fn sum_all(self) -> Result<Var<'g>> {
        self.sum_to(&[])
    }

    pub fn mean_all(self) -> Result<Var<'g>> {
        let n = self.value().numel();
        if n == 0 {
            return Err(Error::Empty("tensor"));
        }
        self.sum_all()?.scale(1.0 / n as f64)
    }

    /// `[.., 1] -> [.., n]` by repetition.
    pub fn expand_last(self, n: usize) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            if a.last_dim() != 1 || a.rank() == 0 {
                return Err(Error::shape("expand_last", format!("{:?}", a.shape())));
            }
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = n;
            let data = a
                .data()
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(n))
                .collect();
            Tensor::new(shape, data)?
        };
        self.graph.record("expand_last", value, Op::ExpandLast(self.id))
    }

    /// `[.., n] -> [.., 1]` by summation.
    pub fn sum_last(self) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            if a.rank() == 0 {
                return Err(Error::shape("sum_last", "scalar input"));
            }
            let n = a.last_dim();
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = 1;
            let data = a.data().chunks(n.max(1)).map(|c| c.iter().sum()).collect();
            Tensor::new(shape, data)?
        };
        self.graph.record("sum_last", value, Op::SumLast(self.id))
    }

    pub fn slice_last(self, start: usize, len: usize) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            let n = a.last_dim();
            if a.rank() == 0 || start + len > n {
                return Err(Error::shape(
                    "slice_last",
                    format!("{start}..{} of {:?}", start + len, a.shape()),
                ));
            }
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = len;
            let data = a
                .data()
                .chunks(n)
                .flat_map(|row| row[start..start + len].iter().copied())
                .collect();
            Tensor::new(shape, data)?
        };
        self.graph
            .record("slice_last", value, Op::SliceLast(self.id, start))
    }

    pub fn pad_last(self, before: usize, after: usize) -> Result<Var<'g>> {
        let value = {
            let a = self.value();
            if a.rank() == 0 {
                return Err(Error::shape("pad_last", "scalar input"));
            }
            let n = a.last_dim();
            let width = before + n + after;
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = width;
            let rows = a.numel() / n.max(1);
            let mut data = vec![0.0; rows * width];
            for (r, row) in a.data().chunks(n.max(1)).enumerate().take(rows) {
                data[r * width + before..r * width + before + n].copy_from_slice(row);
            }
            Tensor::new(shape, data)?
        };
        self.graph
            .record("pad_last", value, Op::PadLast(self.id, before))
    }

    /// Concatenate along the last axis.
    pub fn concat_last(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or(Error::Empty("concat input"))?;
        let widths: Vec<usize> = parts.iter().map(|p| p.value().last_dim()).collect();
        let total: usize = widths.iter().sum();
        let lead = {
            let s = first.shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut acc: Option<Var<'g>> = None;
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let s = p.shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat_last", format!("{s:?} vs lead {lead:?}")));
            }
            let padded = p.pad_last(offset, total - offset - w)?;
            acc = Some(match acc {
                None => padded,
                Some(a) => a.add(padded)?,
            });
            offset += w;
        }
        Ok(acc.expect("non-empty"))
    }

    /// Add a vector along the last axis (bias).
    pub fn add_row(self, row: Var<'g>) -> Result<Var<'g>> {
        let shape = self.shape();
        self.add(row.broadcast_to(&shape)?)
    }

    /// Multiply by a vector along the last axis.
    pub fn mul_row(self, row: Var<'g>) -> Result<Var<'g>> {
        let shape = self.shape();
        self.mul(row.broadcast_to(&shape)?)
    }

    /// Softmax over the last axis. The row maximum is subtracted as a
    /// constant, which leaves values and derivatives unchanged.
    pub fn softmax_last(self) -> Result<Var<'g>> {
        let (shifted, n) = {
            let a = self.value();
            let n = a.last_dim();
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = 1;
            let maxes = a
                .data()
                .chunks(n.max(1))
                .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            (Tensor::new(shape, maxes)?, n)
        };
        let shift = self.graph.constant(shifted).expand_last(n)?;
        let e = self.sub(shift)?.exp()?;
        let inv = e.sum_last()?.powf(-1.0)?.expand_last(n)?;
        e.mul(inv)
    }

    /// `(x - mean) / sqrt(var + eps)` over the last axis, population variance.
    pub fn layer_norm_last(self, eps: f64) -> Result<Var<'g>> {
        let n = self.value().last_dim();
        let inv_n = 1.0 / n as f64;
        let mean = self.sum_last()?.scale(inv_n)?;
        let centered = self.sub(mean.expand_last(n)?)?;
        let var = centered.square()?.sum_last()?.scale(inv_n)?;
        let inv_std = var.add_scalar(eps)?.powf(-0.5)?;
        centered.mul(inv_std.expand_last(n)?)
    }

    /// Mean over axis 1 of a rank-3 tensor: `[B, T, D] -> [B, D]`.
    pub fn mean_axis1(self) -> Result<Var<'g>> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::shape("mean_axis1", format!("{s:?}")));
        }
        self.transpose()?
            .sum_last()?
            .reshape(vec![s[0], s[2]])?
            .scale(1.0 / s[1] as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_at_zero_is_zero() {
        let g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0)).unwrap();
        assert_eq!(x.tanh().unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let g = Graph::new();
        let x = g.constant(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let y = x.softmax_last().unwrap();
        for &v in y.value().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_of_constant_vector_is_zero() {
        let g = Graph::new();
        let x = g.constant(Tensor::vector(vec![4.25; 6]));
        let y = x.layer_norm_last(1e-5).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
        // inexact mean leaves only rounding noise
        let x = g.constant(Tensor::vector(vec![4.2; 6]));
        let y = x.layer_norm_last(1e-5).unwrap();
        assert!(y.value().data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn product_rule() {
        let g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0)).unwrap();
        let y = g.leaf(Tensor::scalar(3.0)).unwrap();
        let grads = g.gradients(x.mul(y).unwrap(), &[x, y]).unwrap();
        assert_eq!(grads[0].item().unwrap(), 3.0);
        assert_eq!(grads[1].item().unwrap(), 2.0);
    }

    #[test]
    fn tanh_gradient_at_origin_is_one() {
        let g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![5])).unwrap();
        let loss = x.tanh().unwrap().sum_all().unwrap();
        let grad = &g.gradients(loss, &[x]).unwrap()[0];
        assert_eq!(grad.data(), &[1.0; 5]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        // y = w*x + w*x  =>  dy/dw = 2x
        let g = Graph::new();
        let w = g.leaf(Tensor::scalar(1.5)).unwrap();
        let x = g.constant(Tensor::scalar(4.0));
        let y = w.mul(x).unwrap().add(w.mul(x).unwrap()).unwrap();
        assert_eq!(g.gradients(y, &[w]).unwrap()[0].item().unwrap(), 8.0);
    }

    #[test]
    fn unreachable_gradient_is_zero() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let unused = g.leaf(Tensor::vector(vec![3.0, 4.0, 5.0])).unwrap();
        let loss = x.sum_all().unwrap();
        let grads = g.gradients(loss, &[unused]).unwrap();
        assert_eq!(grads[0].data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.grad(x, &[x]), Err(Error::NotScalar(_))));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(x.powf(-1.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![2, 3]));
        assert!(matches!(a.matmul(b), Err(Error::Shape { .. })));
        assert!(matches!(a.add(g.scalar(1.0)), Err(Error::Shape { .. })));
    }

    #[test]
    fn graph_can_be_differentiated_repeatedly() {
        let g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0)).unwrap();
        let y = x.powf(3.0).unwrap();
        let a = g.gradients(y, &[x]).unwrap();
        let b = g.gradients(y, &[x]).unwrap();
        assert_eq!(a, b);
        assert!((a[0].item().unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = Var::concat_last(&[a, b]).unwrap();
        assert_eq!(c.value().data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(c.slice_last(1, 2).unwrap().value().data(), b.value().data());
    }
}
