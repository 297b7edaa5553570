//! Reverse-mode gradient tape over whole-matrix operations.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction. [`Tape::backward`] walks it once in reverse.

use std::sync::Arc;

use super::{softmax_into, Activation, Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// `s * x` with `s` a 1x1 tape value.
    ScaleBy {
        scalar: Var,
        x: Var,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    /// Per-row dot product, `n x 1`.
    RowDot(Var, Var),
    /// Row `i` of `x` multiplied by `col[i]`.
    RowScale {
        col: Var,
        x: Var,
    },
    Activation(Var, Activation),
    SoftmaxRows(Var),
    GatherRows {
        x: Var,
        index: Arc<[usize]>,
    },
    /// Softmax within each CSR segment of an `nnz x 1` column.
    SegmentSoftmax {
        x: Var,
        offsets: Arc<[usize]>,
    },
    /// Sparse-weights times dense: `out[i] = sum_e w[e] * dense[cols[e]]`.
    SpMM {
        weights: Var,
        offsets: Arc<[usize]>,
        cols: Arc<[usize]>,
        dense: Var,
    },
    /// Elementwise multiply by a constant mask.
    Mask {
        x: Var,
        mask: Arc<[f64]>,
    },
    Sum(Var),
    Mean(Var),
    /// Mean softmax cross-entropy over the selected rows.
    CrossEntropy {
        logits: Var,
        rows: Arc<[usize]>,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
}

impl Op {
    #[cfg_attr(not(debug_assertions), allow(dead_code))]
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::RowDot(a, b) => vec![*a, *b],
            Op::Transpose(a) | Op::Scale(a, _) | Op::Activation(a, _) | Op::SoftmaxRows(a) => {
                vec![*a]
            }
            Op::Sum(a) | Op::Mean(a) => vec![*a],
            Op::ScaleBy { scalar, x } => vec![*scalar, *x],
            Op::ConcatCols(parts) => parts.clone(),
            Op::SliceCols { x, .. }
            | Op::GatherRows { x, .. }
            | Op::SegmentSoftmax { x, .. }
            | Op::Mask { x, .. } => vec![*x],
            Op::RowScale { col, x } => vec![*col, *x],
            Op::SpMM { weights, dense, .. } => vec![*weights, *dense],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, left: Shape, right: Shape) -> TensorError {
    TensorError::ShapeMismatch { op, left, right }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        #[cfg(debug_assertions)]
        if !value.is_finite() {
            let inputs = op.inputs();
            let inputs_finite = inputs.iter().all(|v| self.value(*v).is_finite());
            assert!(
                inputs.is_empty() || !inputs_finite,
                "non-finite forward value from finite inputs: {op:?}"
            );
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn scale_by(&mut self, scalar: Var, x: Var) -> Result<Var, TensorError> {
        let s = self
            .value(scalar)
            .item()
            .ok_or_else(|| mismatch("scale_by", self.shape(scalar), Shape::new(1, 1)))?;
        let out = self.value(x).map(|v| s * v);
        Ok(self.push(out, Op::ScaleBy { scalar, x }))
    }

    /// Concatenates along columns; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or(TensorError::EmptyInput { op: "concat" })?;
        let rows = self.shape(first).rows;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.rows != rows {
                return Err(mismatch("concat", self.shape(first), s));
            }
            cols += s.cols;
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if start > end || end > s.cols {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice_cols",
                index: end,
                bound: s.cols,
            });
        }
        let src = self.value(x);
        let mut out = Tensor::zeros(s.rows, end - start);
        for r in 0..s.rows {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..end]);
        }
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("row_dot", ta.shape(), tb.shape()));
        }
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let out = Tensor::from_vec(ta.rows(), 1, data)?;
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    pub fn row_scale(&mut self, col: Var, x: Var) -> Result<Var, TensorError> {
        let (tc, tx) = (self.value(col), self.value(x));
        if tc.cols() != 1 || tc.rows() != tx.rows() {
            return Err(mismatch("row_scale", tc.shape(), tx.shape()));
        }
        let mut out = tx.clone();
        for r in 0..tx.rows() {
            let s = tc.data()[r];
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::RowScale { col, x }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(out, Op::Activation(x, kind))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.cols() == 0 {
            return Err(TensorError::EmptyInput { op: "softmax" });
        }
        let mut out = Tensor::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            softmax_into(src.row(r), out.row_mut(r));
        }
        Ok(self.push(out, Op::SoftmaxRows(x)))
    }

    /// Row `r` of the output is row `index[r]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let src = self.value(x);
        let mut out = Tensor::zeros(index.len(), src.cols());
        for (r, &i) in index.iter().enumerate() {
            if i >= src.rows() {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: i,
                    bound: src.rows(),
                });
            }
            out.row_mut(r).copy_from_slice(src.row(i));
        }
        Ok(self.push(out, Op::GatherRows { x, index }))
    }

    /// Softmax of an `nnz x 1` column within each segment
    /// `offsets[i]..offsets[i + 1]`.
    pub fn segment_softmax(&mut self, x: Var, offsets: Arc<[usize]>) -> Result<Var, TensorError> {
        let src = self.value(x);
        let nnz = offsets.last().copied().unwrap_or(0);
        if src.cols() != 1 || src.rows() != nnz {
            return Err(mismatch("segment_softmax", src.shape(), Shape::new(nnz, 1)));
        }
        let mut out = Tensor::zeros(nnz, 1);
        for w in offsets.windows(2) {
            if w[0] == w[1] {
                return Err(TensorError::EmptyInput {
                    op: "segment_softmax",
                });
            }
            softmax_into(&src.data()[w[0]..w[1]], &mut out.data_mut()[w[0]..w[1]]);
        }
        Ok(self.push(out, Op::SegmentSoftmax { x, offsets }))
    }

    pub fn spmm(
        &mut self,
        weights: Var,
        offsets: Arc<[usize]>,
        cols: Arc<[usize]>,
        dense: Var,
    ) -> Result<Var, TensorError> {
        let (tw, td) = (self.value(weights), self.value(dense));
        if tw.cols() != 1 || tw.rows() != cols.len() {
            return Err(mismatch("spmm", tw.shape(), Shape::new(cols.len(), 1)));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= td.rows()) {
            return Err(TensorError::IndexOutOfBounds {
                op: "spmm",
                index: bad,
                bound: td.rows(),
            });
        }
        let rows = offsets.len().saturating_sub(1);
        let mut out = Tensor::zeros(rows, td.cols());
        for i in 0..rows {
            let out_row = out.row_mut(i);
            for e in offsets[i]..offsets[i + 1] {
                let w = tw.data()[e];
                for (o, x) in out_row.iter_mut().zip(td.row(cols[e])) {
                    *o += w * x;
                }
            }
        }
        Ok(self.push(
            out,
            Op::SpMM {
                weights,
                offsets,
                cols,
                dense,
            },
        ))
    }

    pub fn mask(&mut self, x: Var, mask: Arc<[f64]>) -> Result<Var, TensorError> {
        let src = self.value(x);
        if mask.len() != src.shape().len() {
            return Err(mismatch("mask", src.shape(), Shape::new(1, mask.len())));
        }
        let data = src
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(a, b)| a * b)
            .collect();
        let out = Tensor::from_vec(src.rows(), src.cols(), data)?;
        Ok(self.push(out, Op::Mask { x, mask }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let src = self.value(x);
        if src.shape().is_empty() {
            return Err(TensorError::EmptyInput { op: "mean" });
        }
        let m = src.data().iter().sum::<f64>() / src.shape().len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(x)))
    }

    /// Mean of `-ln softmax(logits[rows[k]])[labels[k]]` over `k`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        rows: Arc<[usize]>,
        labels: Arc<[usize]>,
    ) -> Result<Var, TensorError> {
        if rows.is_empty() {
            return Err(TensorError::EmptyInput {
                op: "cross_entropy",
            });
        }
        if rows.len() != labels.len() {
            return Err(mismatch(
                "cross_entropy",
                Shape::new(rows.len(), 1),
                Shape::new(labels.len(), 1),
            ));
        }
        let src = self.value(logits);
        let classes = src.cols();
        let mut probs = Tensor::zeros(rows.len(), classes);
        let mut total = 0.0;
        for (k, (&r, &y)) in rows.iter().zip(labels.iter()).enumerate() {
            if r >= src.rows() {
                return Err(TensorError::IndexOutOfBounds {
                    op: "cross_entropy",
                    index: r,
                    bound: src.rows(),
                });
            }
            if y >= classes {
                return Err(TensorError::IndexOutOfBounds {
                    op: "cross_entropy",
                    index: y,
                    bound: classes,
                });
            }
            total -= log_softmax_at(src.row(r), y).unwrap_or(f64::NAN);
            softmax_into(src.row(r), probs.row_mut(k));
        }
        let loss = total / rows.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                rows,
                labels,
                probs,
            },
        ))
    }

    /// Reverse sweep from a `1 x 1` loss. Every recorded node gets a gradient
    /// slot; nodes the loss does not depend on keep `None`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if shape != Shape::new(1, 1) {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul(&tb.transpose()).expect("matmul grad"));
                accumulate(grads, *b, ta.transpose().matmul(g).expect("matmul grad"));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, hadamard(g, tb));
                accumulate(grads, *b, hadamard(g, ta));
            }
            Op::Scale(a, factor) => accumulate(grads, *a, g.map(|v| v * factor)),
            Op::ScaleBy { scalar, x } => {
                let s = self.value(*scalar).data()[0];
                let tx = self.value(*x);
                let ds: f64 = g.data().iter().zip(tx.data()).map(|(a, b)| a * b).sum();
                accumulate(grads, *scalar, Tensor::scalar(ds));
                accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let s = self.shape(p);
                    let mut part = Tensor::zeros(s.rows, s.cols);
                    for r in 0..s.rows {
                        part.row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + s.cols]);
                    }
                    offset += s.cols;
                    accumulate(grads, p, part);
                }
            }
            Op::SliceCols { x, start } => {
                let s = self.shape(*x);
                let mut full = Tensor::zeros(s.rows, s.cols);
                for r in 0..s.rows {
                    full.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, full);
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                for r in 0..ta.rows() {
                    let gr = g.data()[r];
                    for (o, v) in ga.row_mut(r).iter_mut().zip(tb.row(r)) {
                        *o = gr * v;
                    }
                    for (o, v) in gb.row_mut(r).iter_mut().zip(ta.row(r)) {
                        *o = gr * v;
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::RowScale { col, x } => {
                let (tc, tx) = (self.value(*col), self.value(*x));
                let mut gc = Tensor::zeros(tc.rows(), 1);
                let mut gx = g.clone();
                for r in 0..tx.rows() {
                    gc.data_mut()[r] = g.row(r).iter().zip(tx.row(r)).map(|(a, b)| a * b).sum();
                    let s = tc.data()[r];
                    gx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                }
                accumulate(grads, *col, gc);
                accumulate(grads, *x, gx);
            }
            Op::Activation(x, kind) => {
                let tx = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(tx.data().iter().zip(out.data()))
                    .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                accumulate(
                    grads,
                    *x,
                    Tensor::from_vec(g.rows(), g.cols(), data).unwrap(),
                );
            }
            Op::SoftmaxRows(x) => {
                let mut gx = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    softmax_backward(out.row(r), g.row(r), gx.row_mut(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::GatherRows { x, index } => {
                let s = self.shape(*x);
                let mut gx = Tensor::zeros(s.rows, s.cols);
                for (r, &i) in index.iter().enumerate() {
                    for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SegmentSoftmax { x, offsets } => {
                let mut gx = Tensor::zeros(out.rows(), 1);
                for w in offsets.windows(2) {
                    let seg = w[0]..w[1];
                    softmax_backward(
                        &out.data()[seg.clone()],
                        &g.data()[seg.clone()],
                        &mut gx.data_mut()[seg],
                    );
                }
                accumulate(grads, *x, gx);
            }
            Op::SpMM {
                weights,
                offsets,
                cols,
                dense,
            } => {
                let (tw, td) = (self.value(*weights), self.value(*dense));
                let mut gw = Tensor::zeros(tw.rows(), 1);
                let mut gd = Tensor::zeros(td.rows(), td.cols());
                for i in 0..offsets.len() - 1 {
                    let gi = g.row(i);
                    for e in offsets[i]..offsets[i + 1] {
                        let j = cols[e];
                        gw.data_mut()[e] = gi.iter().zip(td.row(j)).map(|(a, b)| a * b).sum();
                        let w = tw.data()[e];
                        for (o, v) in gd.row_mut(j).iter_mut().zip(gi) {
                            *o += w * v;
                        }
                    }
                }
                accumulate(grads, *weights, gw);
                accumulate(grads, *dense, gd);
            }
            Op::Mask { x, mask } => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask.iter())
                    .map(|(a, b)| a * b)
                    .collect();
                accumulate(
                    grads,
                    *x,
                    Tensor::from_vec(g.rows(), g.cols(), data).unwrap(),
                );
            }
            Op::Sum(x) => {
                let s = self.shape(*x);
                accumulate(grads, *x, Tensor::filled(s.rows, s.cols, g.data()[0]));
            }
            Op::Mean(x) => {
                let s = self.shape(*x);
                let v = g.data()[0] / s.len() as f64;
                accumulate(grads, *x, Tensor::filled(s.rows, s.cols, v));
            }
            Op::CrossEntropy {
                logits,
                rows,
                labels,
                probs,
            } => {
                let s = self.shape(*logits);
                let scale = g.data()[0] / rows.len() as f64;
                let mut gl = Tensor::zeros(s.rows, s.cols);
                for (k, (&r, &y)) in rows.iter().zip(labels.iter()).enumerate() {
                    let dst = gl.row_mut(r);
                    for (c, (o, p)) in dst.iter_mut().zip(probs.row(k)).enumerate() {
                        let target = if c == y { 1.0 } else { 0.0 };
                        *o += scale * (p - target);
                    }
                }
                accumulate(grads, *logits, gl);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).unwrap()
}

/// `dx = y * (dy - <dy, y>)` for `y = softmax(x)`.
fn softmax_backward(y: &[f64], dy: &[f64], dx: &mut [f64]) {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((o, &yv), &gv) in dx.iter_mut().zip(y).zip(dy) {
        *o = yv * (gv - dot);
    }
}

/// `ln softmax(row)[k]` evaluated as `row[k] - logsumexp(row)`.
pub(crate) fn log_softmax_at(row: &[f64], k: usize) -> Option<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Some(row[k] - lse)
}

/// Gradients from one [`Tape::backward`] sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `v`'s value on `tape` when the
    /// loss does not depend on it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let s = tape.shape(v);
            Tensor::zeros(s.rows, s.cols)
        })
    }
}
