//! Reverse-mode differentiation over batched dense tensors.
//!
//! A [`Graph`] records every forward op together with whatever it needs for the
//! backward pass. Rows of a rank-2 value are independent samples; parameters
//! enter as leaves via [`Graph::param`] and are memoized, so each parameter is
//! a single leaf no matter how often a model reads it.

use std::collections::HashMap;

use super::functional::{conv1d_row, layer_norm_row, normal_cdf, normal_pdf, softmax_row};
use super::params::{ParamId, ParamSet};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    /// `x Wᵀ + b`, `W` stored `[out, in]`.
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    /// Per-group products of stacked blocks; `trans_b` multiplies by each block's transpose.
    BatchMatMul { a: Var, b: Var, groups: usize, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu { x: Var, cdf: Vec<f64> },
    Relu(Var),
    LayerNorm { x: Var, gain: Var, shift: Var, eps: f64, xhat: Vec<f64>, inv_std: Vec<f64> },
    SoftmaxRows(Var),
    Reshape { x: Var, shape: Vec<usize> },
    BlockTranspose { x: Var, side: usize },
    Conv1d { x: Var, w: Var, b: Var, c_in: usize, c_out: usize, len: usize },
    MaxPool { x: Var, channels: usize, len: usize, argmax: Vec<usize> },
    Mse { pred: Var, target: Tensor },
    SumSquares(Var),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn inputs(&self) -> [Option<Var>; 3] {
        match *self {
            Op::Input | Op::Param => [None; 3],
            Op::Linear { x, w, b } => [Some(x), Some(w), b],
            Op::MatMul { a, b } | Op::BatchMatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                [Some(a), Some(b), None]
            }
            Op::Scale(x, _)
            | Op::Gelu { x, .. }
            | Op::Relu(x)
            | Op::SoftmaxRows(x)
            | Op::Reshape { x, .. }
            | Op::BlockTranspose { x, .. }
            | Op::MaxPool { x, .. }
            | Op::Mse { pred: x, .. }
            | Op::SumSquares(x)
            | Op::Sum(x)
            | Op::Mean(x) => [Some(x), None, None],
            Op::LayerNorm { x, gain, shift, .. } => [Some(x), Some(gain), Some(shift)],
            Op::Conv1d { x, w, b, .. } => [Some(x), Some(w), Some(b)],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    labels: HashMap<Var, String>,
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded node so the graph can be reused.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
        self.labels.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn label(&self, v: Var) -> &str {
        self.labels.get(&v).map_or("<intermediate>", String::as_str)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, set: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = set.get(id);
        let v = self.push(p.value.clone(), Op::Param);
        self.params.insert(id, v);
        self.labels.insert(v, p.name.clone());
        v
    }

    /// Parameter leaves recorded so far.
    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().map(|(&p, &v)| (p, v))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (out, inp) = rows_cols(wv);
        let width = xv.cols();
        if wv.shape().len() != 2 || width != inp {
            return Err(Error::dim(
                self.label(w),
                format!("input width {width} but weight is {:?}", wv.shape()),
            ));
        }
        if let Some(b) = b {
            let n = self.value(b).len();
            if n != out {
                return Err(Error::dim(
                    self.label(b),
                    format!("bias has {n} entries, layer has {out} outputs"),
                ));
            }
        }
        self.record(Op::Linear { x, w, b })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (rows_cols(self.value(a)), rows_cols(self.value(b)));
        if k != k2 {
            return Err(Error::dim(
                self.label(b),
                format!("matmul [{m}, {k}] x [{k2}, {n}]"),
            ));
        }
        self.record(Op::MatMul { a, b })
    }

    /// `a` stacks `groups` blocks of `[m, k]`; `b` stacks blocks of `[k, n]`
    /// (or `[n, k]` with `trans_b`). Output stacks the `[m, n]` products.
    pub fn batch_matmul(&mut self, a: Var, b: Var, groups: usize, trans_b: bool) -> Result<Var> {
        let (ar, k) = rows_cols(self.value(a));
        let (br, bc) = rows_cols(self.value(b));
        if groups == 0 || ar % groups != 0 || br % groups != 0 {
            return Err(Error::dim("batch_matmul", "rows not divisible by groups"));
        }
        let bk = if trans_b { bc } else { br / groups };
        if bk != k {
            return Err(Error::dim("batch_matmul", format!("inner extents {k} vs {bk}")));
        }
        self.record(Op::BatchMatMul { a, b, groups, trans_b })
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(
                what,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "sub")?;
        self.record(Op::Sub(a, b))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "mul")?;
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.record(Op::Scale(a, factor)).expect("elementwise")
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.record(Op::Gelu { x, cdf: Vec::new() }).expect("elementwise")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.record(Op::Relu(x)).expect("elementwise")
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let n = self.value(x).cols();
        if self.value(gain).len() != n || self.value(shift).len() != n {
            return Err(Error::dim(self.label(gain), format!("normalizing width {n}")));
        }
        self.record(Op::LayerNorm { x, gain, shift, eps, xhat: Vec::new(), inv_std: Vec::new() })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        self.record(Op::SoftmaxRows(x)).expect("elementwise")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        // validate before recording
        self.value(x).clone().reshaped(shape)?;
        self.record(Op::Reshape { x, shape: shape.to_vec() })
    }

    /// Transposes each row, read as a row-major `side × side` block.
    pub fn block_transpose(&mut self, x: Var, side: usize) -> Result<Var> {
        let width = self.value(x).cols();
        if width != side * side {
            return Err(Error::dim("block_transpose", format!("width {width} != {side}²")));
        }
        self.record(Op::BlockTranspose { x, side })
    }

    /// Rows of `x` are `[c_in, len]` sequences flattened channel-major.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, c_in: usize, len: usize) -> Result<Var> {
        let width = self.value(x).cols();
        let c_out = self.value(w).rows();
        if width != c_in * len || self.value(w).cols() != c_in * 3 || self.value(b).len() != c_out {
            return Err(Error::dim(
                self.label(w),
                format!("conv input width {width}, c_in {c_in}, len {len}, kernels {:?}", self.value(w).shape()),
            ));
        }
        self.record(Op::Conv1d { x, w, b, c_in, c_out, len })
    }

    /// Window 2 / stride 2 per channel; odd trailing elements dropped.
    pub fn maxpool1d(&mut self, x: Var, channels: usize, len: usize) -> Result<Var> {
        let width = self.value(x).cols();
        if width != channels * len || len < 2 {
            return Err(Error::dim("maxpool1d", format!("width {width}, {channels}×{len}")));
        }
        self.record(Op::MaxPool { x, channels, len, argmax: Vec::new() })
    }

    /// Mean of squared residuals over every element.
    pub fn mse(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let n = self.value(pred).len();
        if n != target.len() {
            return Err(Error::dim("loss", format!("{n} predictions vs {} targets", target.len())));
        }
        self.record(Op::Mse { pred, target })
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        self.record(Op::SumSquares(x)).expect("reduction")
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.record(Op::Sum(x)).expect("reduction")
    }

    pub fn mean(&mut self, x: Var) -> Var {
        self.record(Op::Mean(x)).expect("reduction")
    }

    fn record(&mut self, mut op: Op) -> Result<Var> {
        let value = self.compute(&mut op)?;
        Ok(self.push(value, op))
    }

    /// Evaluates `op` from the current values of its inputs and refreshes the
    /// caches the backward pass reads. Shapes were validated when it was recorded.
    fn compute(&self, op: &mut Op) -> Result<Tensor> {
        let val = |v: Var| &self.nodes[v.0].value;
        let elementwise = |v: Var, f: &dyn Fn(f64) -> f64| val(v).map(f);
        let zip = |a: Var, b: Var, f: fn(f64, f64) -> f64| {
            let (av, bv) = (val(a), val(b));
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)
        };
        match op {
            Op::Input | Op::Param => unreachable!("leaves are never recomputed"),
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out, inp) = rows_cols(wv);
                let rows = xv.rows();
                let mut y = vec![0.0; rows * out];
                if let Some(b) = b {
                    for r in y.chunks_mut(out) {
                        r.copy_from_slice(val(*b).data());
                    }
                }
                gemm(rows, inp, out, xv.data(), false, wv.data(), true, &mut y, 1.0);
                let shape = if xv.shape().len() == 1 { vec![out] } else { vec![rows, out] };
                Tensor::new(shape, y)
            }
            Op::MatMul { a, b } => {
                let ((m, k), n) = (rows_cols(val(*a)), val(*b).cols());
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, val(*a).data(), false, val(*b).data(), false, &mut c, 0.0);
                Tensor::matrix(m, n, c)
            }
            Op::BatchMatMul { a, b, groups, trans_b } => {
                let (groups, trans_b) = (*groups, *trans_b);
                let (ar, k) = rows_cols(val(*a));
                let (br, bc) = rows_cols(val(*b));
                let m = ar / groups;
                let n = if trans_b { br / groups } else { bc };
                let (ad, bd) = (val(*a).data(), val(*b).data());
                let mut c = vec![0.0; groups * m * n];
                for g in 0..groups {
                    let ab = &ad[g * m * k..(g + 1) * m * k];
                    let bb = &bd[g * k * n..(g + 1) * k * n];
                    block_matmul(ab, bb, &mut c[g * m * n..(g + 1) * m * n], m, k, n, trans_b);
                }
                Tensor::matrix(groups * m, n, c)
            }
            Op::Add(a, b) => zip(*a, *b, |x, y| x + y),
            Op::Sub(a, b) => zip(*a, *b, |x, y| x - y),
            Op::Mul(a, b) => zip(*a, *b, |x, y| x * y),
            Op::Scale(a, factor) => {
                let f = *factor;
                Ok(elementwise(*a, &|x| x * f))
            }
            Op::Gelu { x, cdf } => {
                let xv = val(*x);
                *cdf = xv.data().iter().map(|&v| normal_cdf(v)).collect();
                let data = xv.data().iter().zip(cdf.iter()).map(|(v, c)| v * c).collect();
                Tensor::new(xv.shape().to_vec(), data)
            }
            Op::Relu(x) => Ok(elementwise(*x, &|v| v.max(0.0))),
            Op::LayerNorm { x, gain, shift, eps, xhat, inv_std } => {
                let xv = val(*x);
                let (rows, n) = rows_cols(xv);
                *xhat = vec![0.0; rows * n];
                *inv_std = (0..rows)
                    .map(|r| layer_norm_row(xv.row(r), &mut xhat[r * n..(r + 1) * n], *eps))
                    .collect();
                let (g, s) = (val(*gain).data(), val(*shift).data());
                let mut y = xhat.clone();
                for row in y.chunks_mut(n) {
                    for ((v, gi), si) in row.iter_mut().zip(g).zip(s) {
                        *v = *v * gi + si;
                    }
                }
                Tensor::new(xv.shape().to_vec(), y)
            }
            Op::SoftmaxRows(x) => {
                let mut v = val(*x).clone();
                let c = v.cols();
                v.data_mut().chunks_mut(c).for_each(softmax_row);
                Ok(v)
            }
            Op::Reshape { x, shape } => val(*x).clone().reshaped(shape),
            Op::BlockTranspose { x, side } => {
                let (xv, side) = (val(*x), *side);
                let mut data = vec![0.0; xv.len()];
                for (src, dst) in xv.data().chunks(side * side).zip(data.chunks_mut(side * side)) {
                    transpose_block(src, dst, side);
                }
                Tensor::new(xv.shape().to_vec(), data)
            }
            Op::Conv1d { x, w, b, c_in, c_out, len } => {
                let (c_in, c_out, len) = (*c_in, *c_out, *len);
                let (rows, width) = rows_cols(val(*x));
                let mut y = vec![0.0; rows * c_out * len];
                let (xd, wd, bd) = (val(*x).data(), val(*w).data(), val(*b).data());
                for r in 0..rows {
                    conv1d_row(
                        &xd[r * width..(r + 1) * width],
                        wd,
                        bd,
                        c_in,
                        c_out,
                        len,
                        &mut y[r * c_out * len..(r + 1) * c_out * len],
                    );
                }
                Tensor::matrix(rows, c_out * len, y)
            }
            Op::MaxPool { x, channels, len, argmax } => {
                let (channels, len) = (*channels, *len);
                let (rows, width) = rows_cols(val(*x));
                let out_len = len / 2;
                let xd = val(*x).data();
                let mut y = Vec::with_capacity(rows * channels * out_len);
                argmax.clear();
                for r in 0..rows {
                    for c in 0..channels {
                        let base = r * width + c * len;
                        for t in 0..out_len {
                            let (i0, i1) = (base + 2 * t, base + 2 * t + 1);
                            let pick = if xd[i1] > xd[i0] { i1 } else { i0 };
                            y.push(xd[pick]);
                            argmax.push(pick);
                        }
                    }
                }
                Tensor::matrix(rows, channels * out_len, y)
            }
            Op::Mse { pred, target } => {
                let pv = val(*pred);
                let s = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>();
                Ok(Tensor::scalar(s / pv.len() as f64))
            }
            Op::SumSquares(x) => Ok(Tensor::scalar(val(*x).sum_squares())),
            Op::Sum(x) => Ok(Tensor::scalar(val(*x).data().iter().sum())),
            Op::Mean(x) => {
                let v = val(*x);
                Ok(Tensor::scalar(v.data().iter().sum::<f64>() / v.len() as f64))
            }
        }
    }

    /// Nodes whose value depends on `leaf`, in recording order.
    pub(crate) fn downstream(&self, leaf: Var) -> Vec<usize> {
        let mut dirty = vec![false; self.nodes.len()];
        dirty[leaf.0] = true;
        let mut out = Vec::new();
        for i in leaf.0 + 1..self.nodes.len() {
            if self.nodes[i].op.inputs().iter().flatten().any(|v| dirty[v.0]) {
                dirty[i] = true;
                out.push(i);
            }
        }
        out
    }

    /// Scalar `out` with entry `j` of `leaf` replaced by `value`. Only the nodes in
    /// `downstream` are recomputed, with the same arithmetic as a fresh forward
    /// pass; the graph is left exactly as it was.
    ///
    /// The flag reports whether some ReLU changed which units are active or some
    /// max-pool changed its winner, i.e. the probe crossed a kink.
    pub(crate) fn probe(&mut self, leaf: Var, j: usize, value: f64, downstream: &[usize], out: Var) -> Result<(f64, bool)> {
        let saved: Vec<Node> = downstream.iter().map(|&i| self.nodes[i].clone()).collect();
        let orig = self.nodes[leaf.0].value.data()[j];
        self.nodes[leaf.0].value.data_mut()[j] = value;
        let mut status = Ok(());
        let mut crossed = false;
        for (k, &i) in downstream.iter().enumerate() {
            let mut op = std::mem::replace(&mut self.nodes[i].op, Op::Input);
            match self.compute(&mut op) {
                Ok(v) => {
                    let base = &saved[k];
                    crossed |= match (&op, &base.op) {
                        (Op::Relu(_), _) => v.data().iter().zip(base.value.data()).any(|(a, b)| (*a > 0.0) != (*b > 0.0)),
                        (Op::MaxPool { argmax, .. }, Op::MaxPool { argmax: was, .. }) => argmax != was,
                        _ => false,
                    };
                    self.nodes[i] = Node { value: v, op };
                }
                Err(e) => {
                    status = Err(e);
                    break;
                }
            }
        }
        let reading = self.nodes[out.0].value.data()[0];
        self.nodes[leaf.0].value.data_mut()[j] = orig;
        for (&i, node) in downstream.iter().zip(saved) {
            self.nodes[i] = node;
        }
        status.map(|()| (reading, crossed))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Usage(
                "backward called with no recorded forward evaluation".into(),
            ));
        }
        if out.0 >= self.nodes.len() || self.value(out).len() != 1 {
            return Err(Error::Usage("backward needs a recorded scalar output".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::new(self.value(out).shape().to_vec(), vec![1.0])?);

        for i in (0..=out.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, i: usize, dy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let shape_of = |v: Var| self.nodes[v.0].value.shape().to_vec();
        let mut acc = |v: Var, data: Vec<f64>| {
            let t = Tensor::new(shape_of(v), data).expect("gradient shape");
            match &mut grads[v.0] {
                Some(g) => g.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let d = dy.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out, inp) = (wv.rows(), wv.cols());
                let rows = xv.rows();
                let mut dx = vec![0.0; rows * inp];
                gemm(rows, out, inp, d, false, wv.data(), false, &mut dx, 0.0);
                let mut dw = vec![0.0; out * inp];
                gemm(out, rows, inp, d, true, xv.data(), false, &mut dw, 0.0);
                acc(*x, dx);
                acc(*w, dw);
                if let Some(b) = b {
                    let mut db = vec![0.0; out];
                    for r in d.chunks(out) {
                        for (g, v) in db.iter_mut().zip(r) {
                            *g += v;
                        }
                    }
                    acc(*b, db);
                }
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, d, false, bv.data(), true, &mut da, 0.0);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, av.data(), true, d, false, &mut db, 0.0);
                acc(*a, da);
                acc(*b, db);
            }
            Op::BatchMatMul { a, b, groups, trans_b } => {
                let (av, bv) = (val(*a), val(*b));
                let g = *groups;
                let (m, k) = (av.rows() / g, av.cols());
                let n = dy.cols();
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for gi in 0..g {
                    let ab = &av.data()[gi * m * k..(gi + 1) * m * k];
                    let bb = &bv.data()[gi * k * n..(gi + 1) * k * n];
                    let dc = &d[gi * m * n..(gi + 1) * m * n];
                    let dab = &mut da[gi * m * k..(gi + 1) * m * k];
                    let dbb = &mut db[gi * k * n..(gi + 1) * k * n];
                    for r in 0..m {
                        for c in 0..n {
                            let gval = dc[r * n + c];
                            if gval == 0.0 {
                                continue;
                            }
                            for t in 0..k {
                                let bidx = if *trans_b { c * k + t } else { t * n + c };
                                dab[r * k + t] += gval * bb[bidx];
                                dbb[bidx] += gval * ab[r * k + t];
                            }
                        }
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Add(a, b) => {
                acc(*a, d.to_vec());
                acc(*b, d.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, d.to_vec());
                acc(*b, d.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, d.iter().zip(bv).map(|(g, y)| g * y).collect());
                acc(*b, d.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Scale(a, f) => acc(*a, d.iter().map(|g| g * f).collect()),
            Op::Gelu { x, cdf } => {
                let xv = val(*x).data();
                let dx = d
                    .iter()
                    .zip(xv)
                    .zip(cdf)
                    .map(|((g, &x), c)| g * (c + x * normal_pdf(x)))
                    .collect();
                acc(*x, dx);
            }
            Op::Relu(x) => {
                let xv = val(*x).data();
                acc(*x, d.iter().zip(xv).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect());
            }
            Op::LayerNorm { x, gain, shift, xhat, inv_std, .. } => {
                let n = val(*x).cols();
                let gv = val(*gain).data();
                let mut dx = vec![0.0; xhat.len()];
                let mut dgain = vec![0.0; n];
                let mut dshift = vec![0.0; n];
                for (r, &is) in inv_std.iter().enumerate() {
                    let dr = &d[r * n..(r + 1) * n];
                    let hr = &xhat[r * n..(r + 1) * n];
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..n {
                        let dh = dr[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                        dgain[j] += dr[j] * hr[j];
                        dshift[j] += dr[j];
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for j in 0..n {
                        dx[r * n + j] = is * (dr[j] * gv[j] - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                acc(*x, dx);
                acc(*gain, dgain);
                acc(*shift, dshift);
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut dx = vec![0.0; y.len()];
                for ((yr, dr), out) in y.data().chunks(c).zip(d.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        out[j] = yr[j] * (dr[j] - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::Reshape { x, .. } => acc(*x, d.to_vec()),
            Op::BlockTranspose { x, side } => {
                let s = *side;
                let mut dx = vec![0.0; d.len()];
                for (src, dst) in d.chunks(s * s).zip(dx.chunks_mut(s * s)) {
                    transpose_block(src, dst, s);
                }
                acc(*x, dx);
            }
            Op::Conv1d { x, w, b, c_in, c_out, len } => {
                let (c_in, c_out, len) = (*c_in, *c_out, *len);
                let (xv, wv) = (val(*x), val(*w));
                let rows = xv.rows();
                let (xd, wd) = (xv.data(), wv.data());
                let mut dx = vec![0.0; xd.len()];
                let mut dw = vec![0.0; wd.len()];
                let mut db = vec![0.0; c_out];
                let (wi, wo) = (c_in * len, c_out * len);
                for r in 0..rows {
                    let xr = &xd[r * wi..(r + 1) * wi];
                    let dr = &d[r * wo..(r + 1) * wo];
                    let dxr = &mut dx[r * wi..(r + 1) * wi];
                    for o in 0..c_out {
                        let go = &dr[o * len..(o + 1) * len];
                        db[o] += go.iter().sum::<f64>();
                        for i in 0..c_in {
                            let base = (o * c_in + i) * 3;
                            let xi = &xr[i * len..(i + 1) * len];
                            for t in 0..len {
                                let g = go[t];
                                for kk in 0..3 {
                                    let src = t + kk;
                                    if src == 0 || src > len {
                                        continue;
                                    }
                                    let s = src - 1;
                                    dw[base + kk] += g * xi[s];
                                    dxr[i * len + s] += g * wd[base + kk];
                                }
                            }
                        }
                    }
                }
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::MaxPool { x, argmax, .. } => {
                let mut dx = vec![0.0; val(*x).len()];
                for (g, &src) in d.iter().zip(argmax) {
                    dx[src] += g;
                }
                acc(*x, dx);
            }
            Op::Mse { pred, target } => {
                let pv = val(*pred).data();
                let n = pv.len() as f64;
                let g = d[0];
                acc(
                    *pred,
                    pv.iter().zip(target.data()).map(|(p, t)| g * 2.0 * (p - t) / n).collect(),
                );
            }
            Op::SumSquares(x) => acc(*x, val(*x).data().iter().map(|v| 2.0 * v * d[0]).collect()),
            Op::Sum(x) => acc(*x, vec![d[0]; val(*x).len()]),
            Op::Mean(x) => {
                let n = val(*x).len();
                acc(*x, vec![d[0] / n as f64; n]);
            }
        }
    }
}

fn transpose_block(src: &[f64], dst: &mut [f64], side: usize) {
    for r in 0..side {
        for c in 0..side {
            dst[c * side + r] = src[r * side + c];
        }
    }
}

fn block_matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, trans_b: bool) {
    for r in 0..m {
        for col in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                let bv = if trans_b { b[col * k + t] } else { b[t * n + col] };
                s += a[r * k + t] * bv;
            }
            c[r * n + col] = s;
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient with respect to a recorded node; `None` if it does not reach the output.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn for_params(&self, set: &ParamSet) -> ParamGrads {
        let mut out: Vec<Option<Tensor>> = (0..set.len()).map(|_| None).collect();
        for (&id, &v) in &self.params {
            out[id.0] = self.wrt(v).cloned();
        }
        ParamGrads(out)
    }
}

/// Per-parameter gradients aligned with a [`ParamSet`]; `None` means zero.
#[derive(Debug, Clone)]
pub struct ParamGrads(pub Vec<Option<Tensor>>);

impl ParamGrads {
    pub fn zeros_like(set: &ParamSet) -> Self {
        Self((0..set.len()).map(|_| None).collect())
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(id.0).and_then(Option::as_ref)
    }
}
