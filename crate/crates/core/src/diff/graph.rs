use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, Tensor};
use crate::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a [`Graph`].
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

/// Contiguous run of rows belonging to one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    /// `acos` inputs are clamped to `[-1 + c, 1 - c]` before evaluation.
    pub acos_clamp: f64,
    /// Inputs further than this outside `[-1, 1]` are a domain error.
    pub acos_tolerance: f64,
    pub layer_norm_eps: f64,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            acos_clamp: 1e-7,
            acos_tolerance: 1e-6,
            layer_norm_eps: 1e-5,
        }
    }
}

/// Primitive selector for [`Graph::apply`], used by the gradient checker and
/// the diagnostics command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Softmax,
    /// `x`, `gain`, `bias`
    LayerNorm,
    /// `x · w + b`
    Affine,
    Gelu,
    Relu,
    L2Norm,
    Cosine,
    Acos,
    Mean,
    MeanRows,
    Abs,
    Clamp { lo: f64, hi: f64 },
    Exp,
    Ln,
    Sigmoid,
    Dot,
    NormalizeRows,
    /// `q`, `k`, `v` over a single segment spanning all rows.
    SegmentAttention,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Softmax => "softmax",
            Primitive::LayerNorm => "layer_norm",
            Primitive::Affine => "affine",
            Primitive::Gelu => "gelu",
            Primitive::Relu => "relu",
            Primitive::L2Norm => "l2_norm",
            Primitive::Cosine => "cosine",
            Primitive::Acos => "acos",
            Primitive::Mean => "mean",
            Primitive::MeanRows => "mean_rows",
            Primitive::Abs => "abs",
            Primitive::Clamp { .. } => "clamp",
            Primitive::Exp => "exp",
            Primitive::Ln => "ln",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Dot => "dot",
            Primitive::NormalizeRows => "normalize_rows",
            Primitive::SegmentAttention => "segment_attention",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Primitive::LayerNorm | Primitive::Affine | Primitive::SegmentAttention => 3,
            Primitive::MatMul
            | Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::Div
            | Primitive::Cosine
            | Primitive::Dot => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Trailing,
    Scalar,
}

impl Bcast {
    fn resolve(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Self> {
        if a.shape() == b.shape() {
            Ok(Bcast::Same)
        } else if b.len() == 1 && b.rank() == 0 {
            Ok(Bcast::Scalar)
        } else if b.rank() < a.rank() && a.shape()[a.rank() - b.rank()..] == *b.shape() {
            Ok(Bcast::Trailing)
        } else {
            Err(Error::shape(op, a.shape(), b.shape()))
        }
    }

    #[inline]
    fn index(self, i: usize, b_len: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Trailing => i % b_len,
            Bcast::Scalar => 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Div(usize, usize, Bcast),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize),
    MatMul(usize, usize),
    MatMulBt(usize, usize),
    Transpose(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(usize),
    Relu(usize),
    Abs(usize),
    Clamp(usize, f64, f64),
    Acos(usize, f64),
    Exp(usize),
    Ln(usize),
    Sigmoid(usize),
    Sum(usize),
    Mean(usize),
    MeanAxis(usize, usize),
    L2Norm(usize),
    Dot(usize, usize),
    Cosine(usize, usize),
    NormalizeRows(usize, Vec<f64>),
    Gather(usize, Vec<usize>),
    SegmentMean(usize, Vec<Segment>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    StackRows(Vec<usize>),
    Reshape(usize),
    SegmentAttention {
        q: usize,
        k: usize,
        v: usize,
        segments: Vec<Segment>,
        scale: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    trainable: bool,
}

/// Append-only record of primitive applications.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    options: GraphOptions,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    graph: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.graph != self.graph {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.graph != self.graph {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::with_options(GraphOptions::default())
    }

    pub fn with_options(options: GraphOptions) -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            options,
        }
    }

    pub fn options(&self) -> &GraphOptions {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, true, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.index].value
    }

    pub fn item(&self, var: Var) -> f64 {
        self.nodes[var.index].value.item()
    }

    pub fn is_trainable(&self, var: Var) -> bool {
        self.nodes[var.index].trainable
    }

    fn push_node(&mut self, value: Tensor, op: Op, requires_grad: bool, trainable: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable,
        });
        Var {
            graph: self.id,
            index,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(value, op, requires_grad, false)
    }

    fn idx(&self, var: Var) -> Result<usize> {
        if var.graph != self.id || var.index >= self.nodes.len() {
            return Err(Error::Detached);
        }
        Ok(var.index)
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
        op: fn(usize, usize, Bcast) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        let bc = Bcast::resolve(name, av, bv)?;
        let bl = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv.data()[bc.index(i, bl)]))
            .collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(out, op(ia, ib, bc), &[ia, ib]))
    }

    /// Elementwise sum; `b` may be a scalar or match the trailing dims of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let ia = self.idx(a)?;
        let av = self.val(ia);
        let out = Tensor::from_parts(av.shape().to_vec(), av.data().iter().map(|&x| f(x)).collect());
        Ok(self.push(out, op(ia), &[ia]))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| -x, Op::Neg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| x * c, |i| Op::Scale(i, c))
    }

    /// Adds the constant `c` to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| x + c, Op::Shift)
    }

    /// Adds a constant tensor of identical shape (e.g. an attention mask or
    /// positional table).
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var> {
        let ia = self.idx(a)?;
        let av = self.val(ia);
        if av.shape() != c.shape() {
            return Err(Error::shape("add_const", av.shape(), c.shape()));
        }
        let data = av.data().iter().zip(c.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(out, Op::Shift(ia), &[ia]))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * std_normal_cdf(x), Op::Gelu)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(a, libm::fabs, Op::Abs)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |x| x.clamp(lo, hi), |i| Op::Clamp(i, lo, hi))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, libm::exp, Op::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        if let Some(&bad) = self.val(ia).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain { op: "ln", value: bad });
        }
        self.unary(a, libm::log, Op::Ln)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    /// `acos` with inputs clamped to `[-1 + c, 1 - c]`; inputs beyond
    /// `1 + tolerance` in magnitude are rejected.
    pub fn acos(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let GraphOptions {
            acos_clamp,
            acos_tolerance,
            ..
        } = self.options;
        if let Some(&bad) = self
            .val(ia)
            .data()
            .iter()
            .find(|&&x| !(libm::fabs(x) <= 1.0 + acos_tolerance))
        {
            return Err(Error::Domain { op: "acos", value: bad });
        }
        let lim = 1.0 - acos_clamp;
        self.unary(a, |x| libm::acos(x.clamp(-lim, lim)), |i| Op::Acos(i, lim))
    }

    // ---------------------------------------------------------------- reductions

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let s = self.val(ia).sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(ia), &[ia]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.is_empty() {
            return Err(Error::Empty("mean input"));
        }
        let s = v.sum() / v.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(ia), &[ia]))
    }

    /// Mean of a rank-2 tensor over `axis` (0: over rows, 1: over columns).
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.rank() != 2 || axis > 1 {
            return Err(Error::shape("mean_axis", v.shape(), &[axis]));
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let out = if axis == 0 {
            let mut o = vec![0.0; c];
            for i in 0..r {
                for (oj, x) in o.iter_mut().zip(v.row(i)) {
                    *oj += x;
                }
            }
            o.iter_mut().for_each(|x| *x /= r as f64);
            Tensor::vector(o)
        } else {
            Tensor::vector((0..r).map(|i| v.row(i).iter().sum::<f64>() / c as f64).collect())
        };
        Ok(self.push(out, Op::MeanAxis(ia, axis), &[ia]))
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let n = norm(self.val(ia).data());
        Ok(self.push(Tensor::scalar(n), Op::L2Norm(ia), &[ia]))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        if av.shape() != bv.shape() {
            return Err(Error::shape("dot", av.shape(), bv.shape()));
        }
        let d = dot(av.data(), bv.data());
        Ok(self.push(Tensor::scalar(d), Op::Dot(ia, ib), &[ia, ib]))
    }

    /// Cosine similarity of two equally shaped tensors, read as flat vectors.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        if av.shape() != bv.shape() {
            return Err(Error::shape("cosine", av.shape(), bv.shape()));
        }
        let (na, nb) = (norm(av.data()), norm(bv.data()));
        let n = na.min(nb);
        if !(n > 0.0) {
            return Err(Error::Degenerate {
                context: "cosine",
                norm: n,
            });
        }
        let c = dot(av.data(), bv.data()) / (na * nb);
        Ok(self.push(Tensor::scalar(c), Op::Cosine(ia, ib), &[ia, ib]))
    }

    /// Scales every row of a rank-2 tensor (or a vector) to unit norm.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        let (r, c) = v.dims2();
        let mut norms = Vec::with_capacity(r);
        let mut data = Vec::with_capacity(v.len());
        for i in 0..r {
            let row = &v.data()[i * c..(i + 1) * c];
            let n = norm(row);
            if !(n > 0.0) {
                return Err(Error::Degenerate {
                    context: "normalize_rows",
                    norm: n,
                });
            }
            norms.push(n);
            data.extend(row.iter().map(|x| x / n));
        }
        let out = Tensor::from_parts(v.shape().to_vec(), data);
        Ok(self.push(out, Op::NormalizeRows(ia, norms), &[ia]))
    }

    // ---------------------------------------------------------------- linear algebra

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(ia, ib), &[ia, ib]))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (av, bv) = (self.val(ia), self.val(ib));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(Error::shape("matmul_bt", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
        let mut out = vec![0.0; m * n];
        gemm_bt_acc(av.data(), bv.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulBt(ia, ib), &[ia, ib]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.rank() != 2 {
            return Err(Error::shape("transpose", v.shape(), &[2]));
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v.data()[i * c + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(ia), &[ia]))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }

    // ---------------------------------------------------------------- normalisation

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        let (r, c) = v.dims2();
        let mut out = Vec::with_capacity(v.len());
        for i in 0..r {
            softmax_into(&v.data()[i * c..(i + 1) * c], &mut out);
        }
        let out = Tensor::from_parts(v.shape().to_vec(), out);
        Ok(self.push(out, Op::Softmax(ia), &[ia]))
    }

    /// Layer normalisation over the last axis with affine `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (ix, ig, ib) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let (xv, gv, bv) = (self.val(ix), self.val(ig), self.val(ib));
        let (r, c) = xv.dims2();
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::shape("layer_norm", xv.shape(), gv.shape()));
        }
        let eps = self.options.layer_norm_eps;
        let mut xhat = Vec::with_capacity(xv.len());
        let mut rstd = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(xv.len());
        for i in 0..r {
            let row = &xv.data()[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let rs = 1.0 / libm::sqrt(var + eps);
            rstd.push(rs);
            for (j, &x) in row.iter().enumerate() {
                let h = (x - mu) * rs;
                xhat.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: ix,
                gain: ig,
                bias: ib,
                xhat,
                rstd,
            },
            &[ix, ig, ib],
        ))
    }

    // ---------------------------------------------------------------- structure

    /// Looks up rows of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let it = self.idx(table)?;
        let tv = self.val(it);
        let (r, c) = tv.dims2();
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(Error::shape("gather_rows", tv.shape(), &[id]));
            }
            out.extend_from_slice(tv.row(id));
        }
        let out = Tensor::from_parts(vec![ids.len(), c], out);
        Ok(self.push(out, Op::Gather(it, ids.to_vec()), &[it]))
    }

    /// Mean of each segment of rows; output has one row per segment.
    pub fn segment_mean(&mut self, a: Var, segments: &[Segment]) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        let (r, c) = v.dims2();
        let mut out = Vec::with_capacity(segments.len() * c);
        for s in segments {
            if s.len == 0 || s.start + s.len > r {
                return Err(Error::shape("segment_mean", v.shape(), &[s.start, s.len]));
            }
            let base = out.len();
            out.resize(base + c, 0.0);
            for i in s.start..s.start + s.len {
                for (o, x) in out[base..].iter_mut().zip(v.row(i)) {
                    *o += x;
                }
            }
            out[base..].iter_mut().for_each(|x| *x /= s.len as f64);
        }
        let out = Tensor::from_parts(vec![segments.len(), c], out);
        Ok(self.push(out, Op::SegmentMean(ia, segments.to_vec()), &[ia]))
    }

    /// Rows `start..start + count` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        let (r, c) = v.dims2();
        if v.rank() != 2 || start + count > r {
            return Err(Error::shape("slice_rows", v.shape(), &[start, count]));
        }
        let out = Tensor::from_parts(vec![count, c], v.data()[start * c..(start + count) * c].to_vec());
        Ok(self.push(out, Op::SliceRows(ia, start), &[ia]))
    }

    /// Row `i` of a rank-2 tensor as a vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        let (r, c) = v.dims2();
        if v.rank() != 2 || i >= r {
            return Err(Error::shape("row", v.shape(), &[i]));
        }
        let out = Tensor::vector(v.row(i).to_vec());
        let _ = c;
        Ok(self.push(out, Op::SliceRows(ia, i), &[ia]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia);
        if v.rank() != 2 || start + width > v.shape()[1] {
            return Err(Error::shape("slice_cols", v.shape(), &[start, width]));
        }
        let (r, c) = (v.shape()[0], v.shape()[1]);
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&v.data()[i * c + start..i * c + start + width]);
        }
        let out = Tensor::from_parts(vec![r, width], out);
        Ok(self.push(out, Op::SliceCols(ia, start), &[ia]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_cols input"));
        }
        let ids = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let rows = self.val(ids[0]).shape()[0];
        let mut width = 0;
        for &i in &ids {
            let s = self.val(i).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(Error::shape("concat_cols", self.val(ids[0]).shape(), s));
            }
            width += s[1];
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &i in &ids {
                out.extend_from_slice(self.val(i).row(r));
            }
        }
        let out = Tensor::from_parts(vec![rows, width], out);
        Ok(self.push(out, Op::ConcatCols(ids.clone()), &ids))
    }

    /// Stacks vectors and/or matrices with a common trailing width along rows.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("stack_rows input"));
        }
        let ids = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let width = self.val(ids[0]).dims2().1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &i in &ids {
            let v = self.val(i);
            if v.rank() == 0 || v.rank() > 2 || v.dims2().1 != width {
                return Err(Error::shape("stack_rows", self.val(ids[0]).shape(), v.shape()));
            }
            rows += v.dims2().0;
            out.extend_from_slice(v.data());
        }
        let out = Tensor::from_parts(vec![rows, width], out);
        Ok(self.push(out, Op::StackRows(ids.clone()), &ids))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.val(ia).clone().reshaped(shape.to_vec())?;
        Ok(self.push(v, Op::Reshape(ia), &[ia]))
    }

    /// Scaled dot-product attention restricted to each segment of rows:
    /// `softmax(q_s k_sᵀ · scale) v_s` for every segment `s`.
    pub fn segment_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segments: &[Segment],
        scale: f64,
    ) -> Result<Var> {
        let (iq, ik, iv) = (self.idx(q)?, self.idx(k)?, self.idx(v)?);
        let (qv, kv, vv) = (self.val(iq), self.val(ik), self.val(iv));
        if qv.rank() != 2 || qv.shape() != kv.shape() || vv.rank() != 2 || vv.shape()[0] != qv.shape()[0] {
            return Err(Error::shape("segment_attention", qv.shape(), kv.shape()));
        }
        let (n, dk) = (qv.shape()[0], qv.shape()[1]);
        let dv = vv.shape()[1];
        let mut out = vec![0.0; n * dv];
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for s in segments {
            if s.len == 0 || s.start + s.len > n {
                return Err(Error::shape("segment_attention", qv.shape(), &[s.start, s.len]));
            }
            let qs = &qv.data()[s.start * dk..(s.start + s.len) * dk];
            let ks = &kv.data()[s.start * dk..(s.start + s.len) * dk];
            let vs = &vv.data()[s.start * dv..(s.start + s.len) * dv];
            scores.clear();
            scores.resize(s.len * s.len, 0.0);
            gemm_bt_acc(qs, ks, &mut scores, s.len, dk, s.len);
            scores.iter_mut().for_each(|x| *x *= scale);
            let base = probs.len();
            for i in 0..s.len {
                softmax_into(&scores[i * s.len..(i + 1) * s.len], &mut probs);
            }
            gemm_acc(
                &probs[base..],
                vs,
                &mut out[s.start * dv..(s.start + s.len) * dv],
                s.len,
                s.len,
                dv,
            );
        }
        let out = Tensor::from_parts(vec![n, dv], out);
        Ok(self.push(
            out,
            Op::SegmentAttention {
                q: iq,
                k: ik,
                v: iv,
                segments: segments.to_vec(),
                scale,
                probs,
            },
            &[iq, ik, iv],
        ))
    }

    /// Dispatches a [`Primitive`] over `inputs`.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != prim.arity() {
            let shapes: Vec<usize> = inputs.iter().map(|_| 0).collect();
            return Err(Error::shape(prim.name(), &shapes, &[prim.arity()]));
        }
        let x = inputs[0];
        match prim {
            Primitive::MatMul => self.matmul(x, inputs[1]),
            Primitive::Add => self.add(x, inputs[1]),
            Primitive::Sub => self.sub(x, inputs[1]),
            Primitive::Mul => self.mul(x, inputs[1]),
            Primitive::Div => self.div(x, inputs[1]),
            Primitive::Softmax => self.softmax(x),
            Primitive::LayerNorm => self.layer_norm(x, inputs[1], inputs[2]),
            Primitive::Affine => self.affine(x, inputs[1], inputs[2]),
            Primitive::Gelu => self.gelu(x),
            Primitive::Relu => self.relu(x),
            Primitive::L2Norm => self.l2_norm(x),
            Primitive::Cosine => self.cosine(x, inputs[1]),
            Primitive::Acos => self.acos(x),
            Primitive::Mean => self.mean(x),
            Primitive::MeanRows => self.mean_axis(x, 0),
            Primitive::Abs => self.abs(x),
            Primitive::Clamp { lo, hi } => self.clamp(x, lo, hi),
            Primitive::Exp => self.exp(x),
            Primitive::Ln => self.ln(x),
            Primitive::Sigmoid => self.sigmoid(x),
            Primitive::Dot => self.dot(x, inputs[1]),
            Primitive::NormalizeRows => self.normalize_rows(x),
            Primitive::SegmentAttention => {
                let n = self.value(x).dims2().0;
                let dk = self.value(x).dims2().1;
                self.segment_attention(
                    x,
                    inputs[1],
                    inputs[2],
                    &[Segment { start: 0, len: n }],
                    1.0 / libm::sqrt(dk as f64),
                )
            }
        }
    }

    // ---------------------------------------------------------------- backward

    /// Reverse sweep from a scalar `loss`. Every trainable leaf gets an entry,
    /// zero when it does not influence the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss)?;
        let lv = self.val(il);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; il + 1];
        if self.nodes[il].requires_grad {
            grads[il] = Some(vec![1.0]);
        }
        for i in (0..=il).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
        }
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if node.trainable {
                let data = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; node.value.len()]);
                out[i] = Some(Tensor::from_parts(node.value.shape().to_vec(), data));
            }
        }
        Ok(Gradients {
            graph: self.id,
            grads: out,
        })
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b, bc) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    let bl = gb.len();
                    for (k, &gk) in g.iter().enumerate() {
                        gb[bc.index(k, bl)] += gk;
                    }
                }
            }
            &Op::Sub(a, b, bc) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    let bl = gb.len();
                    for (k, &gk) in g.iter().enumerate() {
                        gb[bc.index(k, bl)] -= gk;
                    }
                }
            }
            &Op::Mul(a, b, bc) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                let bl = bv.len();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        ga[k] += gk * bv[bc.index(k, bl)];
                    }
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    for (k, &gk) in g.iter().enumerate() {
                        gb[bc.index(k, bl)] += gk * av[k];
                    }
                }
            }
            &Op::Div(a, b, bc) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                let bl = bv.len();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        ga[k] += gk / bv[bc.index(k, bl)];
                    }
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    for (k, &gk) in g.iter().enumerate() {
                        let y = bv[bc.index(k, bl)];
                        gb[bc.index(k, bl)] -= gk * av[k] / (y * y);
                    }
                }
            }
            &Op::Neg(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, g, -1.0);
                }
            }
            &Op::Scale(a, c) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, g, c);
                }
            }
            &Op::Shift(a) | &Op::Reshape(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, g, 1.0);
                }
            }
            &Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a].value, &nodes[b].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if let Some(ga) = buf(grads, nodes, a) {
                    // dA = G · Bᵀ
                    gemm_bt_acc(g, bv.data(), ga, m, n, k);
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    // dB = Aᵀ · G
                    gemm_at_acc(av.data(), g, gb, m, k, n);
                }
            }
            &Op::MatMulBt(a, b) => {
                let (av, bv) = (&nodes[a].value, &nodes[b].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[0]);
                if let Some(ga) = buf(grads, nodes, a) {
                    // dA = G · B
                    gemm_acc(g, bv.data(), ga, m, n, k);
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    // dB = Gᵀ · A
                    gemm_at_acc(g, av.data(), gb, m, n, k);
                }
            }
            &Op::Transpose(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    let (r, c) = (out.shape()[0], out.shape()[1]);
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            &Op::Softmax(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    let (r, c) = out.dims2();
                    let y = out.data();
                    for i in 0..r {
                        let ys = &y[i * c..(i + 1) * c];
                        let gs = &g[i * c..(i + 1) * c];
                        let s = dot(ys, gs);
                        for j in 0..c {
                            ga[i * c + j] += ys[j] * (gs[j] - s);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (r, c) = out.dims2();
                let gv = nodes[*gain].value.data();
                if let Some(gg) = buf(grads, nodes, *gain) {
                    for k in 0..r * c {
                        gg[k % c] += g[k] * xhat[k];
                    }
                }
                if let Some(gb) = buf(grads, nodes, *bias) {
                    for k in 0..r * c {
                        gb[k % c] += g[k];
                    }
                }
                if let Some(gx) = buf(grads, nodes, *x) {
                    let cf = c as f64;
                    for i in 0..r {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            let gh = g[i * c + j] * gv[j];
                            s1 += gh;
                            s2 += gh * xhat[i * c + j];
                        }
                        for j in 0..c {
                            let gh = g[i * c + j] * gv[j];
                            gx[i * c + j] += rstd[i] / cf * (cf * gh - s1 - xhat[i * c + j] * s2);
                        }
                    }
                }
            }
            &Op::Gelu(a) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        let x = xv[k];
                        ga[k] += gk * (std_normal_cdf(x) + x * std_normal_pdf(x));
                    }
                }
            }
            &Op::Relu(a) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        if xv[k] > 0.0 {
                            ga[k] += gk;
                        }
                    }
                }
            }
            &Op::Abs(a) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        if xv[k] > 0.0 {
                            ga[k] += gk;
                        } else if xv[k] < 0.0 {
                            ga[k] -= gk;
                        }
                    }
                }
            }
            &Op::Clamp(a, lo, hi) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        if xv[k] > lo && xv[k] < hi {
                            ga[k] += gk;
                        }
                    }
                }
            }
            &Op::Acos(a, lim) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        let x = xv[k];
                        if x > -lim && x < lim {
                            ga[k] -= gk / libm::sqrt(1.0 - x * x);
                        }
                    }
                }
            }
            &Op::Exp(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        ga[k] += gk * out.data()[k];
                    }
                }
            }
            &Op::Ln(a) => {
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        ga[k] += gk / xv[k];
                    }
                }
            }
            &Op::Sigmoid(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    for (k, &gk) in g.iter().enumerate() {
                        let y = out.data()[k];
                        ga[k] += gk * y * (1.0 - y);
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            &Op::Mean(a) => {
                if let Some(ga) = buf(grads, nodes, a) {
                    let s = g[0] / ga.len() as f64;
                    ga.iter_mut().for_each(|x| *x += s);
                }
            }
            &Op::MeanAxis(a, axis) => {
                let (r, c) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
                if let Some(ga) = buf(grads, nodes, a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += if axis == 0 {
                                g[j] / r as f64
                            } else {
                                g[i] / c as f64
                            };
                        }
                    }
                }
            }
            &Op::L2Norm(a) => {
                let n = out.item();
                let xv = nodes[a].value.data();
                if let Some(ga) = buf(grads, nodes, a) {
                    if n > 0.0 {
                        axpy(ga, xv, g[0] / n);
                    }
                }
            }
            &Op::Dot(a, b) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(ga, bv, g[0]);
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    axpy(gb, av, g[0]);
                }
            }
            &Op::Cosine(a, b) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                let (na, nb) = (norm(av), norm(bv));
                let c = out.item();
                if let Some(ga) = buf(grads, nodes, a) {
                    for k in 0..av.len() {
                        ga[k] += g[0] * (bv[k] / (na * nb) - c * av[k] / (na * na));
                    }
                }
                if let Some(gb) = buf(grads, nodes, b) {
                    for k in 0..bv.len() {
                        gb[k] += g[0] * (av[k] / (na * nb) - c * bv[k] / (nb * nb));
                    }
                }
            }
            Op::NormalizeRows(a, norms) => {
                if let Some(ga) = buf(grads, nodes, *a) {
                    let (r, c) = out.dims2();
                    let y = out.data();
                    for i in 0..r {
                        let ys = &y[i * c..(i + 1) * c];
                        let gs = &g[i * c..(i + 1) * c];
                        let s = dot(ys, gs);
                        for j in 0..c {
                            ga[i * c + j] += (gs[j] - ys[j] * s) / norms[i];
                        }
                    }
                }
            }
            Op::Gather(t, ids) => {
                if let Some(gt) = buf(grads, nodes, *t) {
                    let c = out.dims2().1;
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut gt[id * c..(id + 1) * c], &g[r * c..(r + 1) * c], 1.0);
                    }
                }
            }
            Op::SegmentMean(a, segs) => {
                if let Some(ga) = buf(grads, nodes, *a) {
                    let c = out.dims2().1;
                    for (si, s) in segs.iter().enumerate() {
                        let gs = &g[si * c..(si + 1) * c];
                        let w = 1.0 / s.len as f64;
                        for i in s.start..s.start + s.len {
                            axpy(&mut ga[i * c..(i + 1) * c], gs, w);
                        }
                    }
                }
            }
            &Op::SliceRows(a, start) => {
                let c = nodes[a].value.dims2().1;
                if let Some(ga) = buf(grads, nodes, a) {
                    axpy(&mut ga[start * c..start * c + g.len()], g, 1.0);
                }
            }
            &Op::SliceCols(a, start) => {
                let c = nodes[a].value.shape()[1];
                let (r, w) = (out.shape()[0], out.shape()[1]);
                if let Some(ga) = buf(grads, nodes, a) {
                    for i in 0..r {
                        axpy(&mut ga[i * c + start..i * c + start + w], &g[i * w..(i + 1) * w], 1.0);
                    }
                }
            }
            Op::ConcatCols(ids) => {
                let (r, width) = (out.shape()[0], out.shape()[1]);
                let mut offset = 0;
                for &p in ids {
                    let w = nodes[p].value.shape()[1];
                    if let Some(gp) = buf(grads, nodes, p) {
                        for i in 0..r {
                            axpy(
                                &mut gp[i * w..(i + 1) * w],
                                &g[i * width + offset..i * width + offset + w],
                                1.0,
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::StackRows(ids) => {
                let mut offset = 0;
                for &p in ids {
                    let n = nodes[p].value.len();
                    if let Some(gp) = buf(grads, nodes, p) {
                        axpy(gp, &g[offset..offset + n], 1.0);
                    }
                    offset += n;
                }
            }
            Op::SegmentAttention {
                q,
                k,
                v,
                segments,
                scale,
                probs,
            } => {
                let (q, k, v, scale) = (*q, *k, *v, *scale);
                let dk = nodes[q].value.shape()[1];
                let dv = nodes[v].value.shape()[1];
                let (qd, kd, vd) = (nodes[q].value.data(), nodes[k].value.data(), nodes[v].value.data());
                let mut pbase = 0;
                let mut gp = Vec::new();
                for s in segments {
                    let l = s.len;
                    let p = &probs[pbase..pbase + l * l];
                    pbase += l * l;
                    let go = &g[s.start * dv..(s.start + l) * dv];
                    if let Some(gv) = buf(grads, nodes, v) {
                        gemm_at_acc(p, go, &mut gv[s.start * dv..(s.start + l) * dv], l, l, dv);
                    }
                    // dP = dO · Vᵀ, then the softmax Jacobian.
                    gp.clear();
                    gp.resize(l * l, 0.0);
                    gemm_bt_acc(go, &vd[s.start * dv..(s.start + l) * dv], &mut gp, l, dv, l);
                    for i in 0..l {
                        let pr = &p[i * l..(i + 1) * l];
                        let row = &mut gp[i * l..(i + 1) * l];
                        let sdot = dot(pr, row);
                        for j in 0..l {
                            row[j] = pr[j] * (row[j] - sdot) * scale;
                        }
                    }
                    if let Some(gq) = buf(grads, nodes, q) {
                        gemm_acc(&gp, &kd[s.start * dk..(s.start + l) * dk], &mut gq[s.start * dk..(s.start + l) * dk], l, l, dk);
                    }
                    if let Some(gk) = buf(grads, nodes, k) {
                        gemm_at_acc(&gp, &qd[s.start * dk..(s.start + l) * dk], &mut gk[s.start * dk..(s.start + l) * dk], l, l, dk);
                    }
                }
            }
        }
    }
}

fn buf<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], idx: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[idx].requires_grad {
        return None;
    }
    Some(grads[idx].get_or_insert_with(|| vec![0.0; nodes[idx].value.len()]))
}

#[inline]
fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softmax_into(row: &[f64], out: &mut Vec<f64>) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let base = out.len();
    let mut s = 0.0;
    for &x in row {
        let e = libm::exp(x - m);
        s += e;
        out.push(e);
    }
    out[base..].iter_mut().for_each(|x| *x /= s);
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}
