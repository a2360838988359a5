//! Reverse-mode differentiation over a recorded list of operations.
//!
//! Values are created on a [`Tape`] and referenced through copyable [`Var`]
//! handles. [`Tape::backward`] walks the record in reverse. Gradients of leaf
//! variables accumulate across repeated `backward` calls until
//! [`Tape::zero_grads`]; intermediate gradients are rebuilt on every call.

use std::sync::Arc;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{ParameterStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Arc<[f64]>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Relu(Var),
    GatherRows(Var, Arc<[usize]>),
    /// Per output element, the input row that won (or `usize::MAX`).
    SegmentMax(Var, Vec<usize>),
    /// Cached `(softmax - onehot) / segments` per logit row.
    SegmentCrossEntropy(Var, Vec<f64>),
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<usize>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Record a differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Record the parameter at `index` of `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParameterStore, index: usize) -> Var {
        let v = self.variable(store.value(index).clone());
        self.nodes[v.0].param = Some(index);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    /// Gradient of a leaf as a tensor (zeros when it received none).
    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        let data = self.leaf_grads[v.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; value.data().len()]);
        Tensor::new(value.rows(), value.cols(), data).expect("gradient matches value shape")
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Parameter leaves and their accumulated gradients.
    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (usize, &[f64])> + '_ {
        self.nodes
            .iter()
            .zip(&self.leaf_grads)
            .filter_map(|(node, g)| match (node.param, g) {
                (Some(p), Some(g)) => Some((p, g.as_slice())),
                _ => None,
            })
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        matmul_acc(ta.data(), tb.data(), &mut out, n, k, m);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(n, m, out)?, Op::MatMul(a, b), rg))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        self.same_shape(a, b, name)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.rows(), ta.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Add a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: ta.shape(),
                right: tr.shape(),
            });
        }
        let m = ta.cols();
        let mut data = ta.data().to_vec();
        if m > 0 {
            for chunk in data.chunks_mut(m) {
                chunk.iter_mut().zip(tr.data()).for_each(|(x, &b)| *x += b);
            }
        }
        let value = Tensor::new(ta.rows(), m, data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Elementwise product with a constant mask of the same length.
    pub fn mul_const(&mut self, a: Var, mask: Arc<[f64]>) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if mask.len() != ta.data().len() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_const",
                left: ta.shape(),
                right: [mask.len(), 1],
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| x * m)
            .collect();
        let value = Tensor::new(ta.rows(), ta.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::MulConst(a, mask), rg))
    }

    /// Concatenate along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_cols"))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(first).shape(),
                    right: self.value(p).shape(),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "slice_rows",
                left: ta.shape(),
                right: [start, len],
            });
        }
        let c = ta.cols();
        let data = ta.data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(len, c, data)?, Op::SliceRows(a, start), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    /// Row `index[i]` of `a` becomes row `i` of the output.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= ta.rows()) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: ta.rows(),
            });
        }
        let c = ta.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            data.extend_from_slice(ta.row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(index.len(), c, data)?,
            Op::GatherRows(a, index),
            rg,
        ))
    }

    /// Elementwise maximum of the rows of `a` grouped by `segment[row]`.
    ///
    /// Empty segments yield zeros and receive no gradient. On ties the first
    /// row wins the gradient.
    pub fn segment_max(
        &mut self,
        a: Var,
        segment: &[usize],
        segments: usize,
    ) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if segment.len() != ta.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_max",
                left: ta.shape(),
                right: [segment.len(), 1],
            });
        }
        let c = ta.cols();
        let mut out = vec![0.0; segments * c];
        let mut winner = vec![usize::MAX; segments * c];
        for (r, &s) in segment.iter().enumerate() {
            if s >= segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_max",
                    index: s,
                    len: segments,
                });
            }
            let row = ta.row(r);
            for j in 0..c {
                let k = s * c + j;
                if winner[k] == usize::MAX || row[j] > out[k] {
                    out[k] = row[j];
                    winner[k] = r;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(segments, c, out)?,
            Op::SegmentMax(a, winner),
            rg,
        ))
    }

    /// Mean over segments of the softmax cross-entropy of a column of logits
    /// grouped by `segment[row]`; `targets[s]` is the row holding the true
    /// class of segment `s`. Every segment must be nonempty.
    pub fn segment_cross_entropy(
        &mut self,
        logits: Var,
        segment: &[usize],
        targets: &[usize],
    ) -> Result<Var, TensorError> {
        let tl = self.value(logits);
        if tl.cols() != 1 || segment.len() != tl.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_cross_entropy",
                left: tl.shape(),
                right: [segment.len(), 1],
            });
        }
        let segments = targets.len();
        let x = tl.data();
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (r, &s) in segment.iter().enumerate() {
            if s >= segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_cross_entropy",
                    index: s,
                    len: segments,
                });
            }
            max[s] = max[s].max(x[r]);
        }
        let mut denom = vec![0.0; segments];
        for (r, &s) in segment.iter().enumerate() {
            denom[s] += (x[r] - max[s]).exp();
        }
        let mut loss = 0.0;
        for (s, &t) in targets.iter().enumerate() {
            if t >= x.len() || segment[t] != s {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_cross_entropy",
                    index: t,
                    len: x.len(),
                });
            }
            loss += max[s] + denom[s].ln() - x[t];
        }
        let scale = 1.0 / segments as f64;
        let mut cache: Vec<f64> = segment
            .iter()
            .enumerate()
            .map(|(r, &s)| (x[r] - max[s]).exp() / denom[s] * scale)
            .collect();
        for &t in targets {
            cache[t] -= scale;
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss * scale),
            Op::SegmentCrossEntropy(logits, cache),
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Squared L2 norm.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().map(|x| x * x).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::SumSquares(a), rg)
    }

    /// Propagate from a scalar `loss`, accumulating into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[i] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(g),
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                    if self.rg(*a) {
                        let ga = slot(&mut grads, *a, n * k);
                        matmul_bt_acc(&g, tb.data(), ga, n, m, k);
                    }
                    if self.rg(*b) {
                        let gb = slot(&mut grads, *b, k * m);
                        matmul_at_acc(ta.data(), &g, gb, n, k, m);
                    }
                }
                Op::Add(a, b) => {
                    for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                        if self.rg(v) {
                            axpy(slot(&mut grads, v, g.len()), sign, &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                        if self.rg(v) {
                            axpy(slot(&mut grads, v, g.len()), sign, &g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (v, other) in [(*a, *b), (*b, *a)] {
                        if self.rg(v) {
                            let o = self.nodes[other.0].value.data();
                            let gv = slot(&mut grads, v, g.len());
                            for ((x, &gi), &oi) in gv.iter_mut().zip(&g).zip(o) {
                                *x += gi * oi;
                            }
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*a) {
                        axpy(slot(&mut grads, *a, g.len()), 1.0, &g);
                    }
                    if self.rg(*row) {
                        let m = self.nodes[row.0].value.cols();
                        let gr = slot(&mut grads, *row, m);
                        if m > 0 {
                            for chunk in g.chunks(m) {
                                axpy(gr, 1.0, chunk);
                            }
                        }
                    }
                }
                Op::Scale(a, factor) => {
                    axpy(slot(&mut grads, *a, g.len()), *factor, &g);
                }
                Op::MulConst(a, mask) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for ((x, &gi), &m) in ga.iter_mut().zip(&g).zip(mask.iter()) {
                        *x += gi * m;
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.nodes[p.0].value.cols();
                        if self.rg(p) {
                            let gp = slot(&mut grads, p, rows * c);
                            for r in 0..rows {
                                axpy(
                                    &mut gp[r * c..(r + 1) * c],
                                    1.0,
                                    &g[r * total + offset..r * total + offset + c],
                                );
                            }
                        }
                        offset += c;
                    }
                }
                Op::SliceRows(a, start) => {
                    let c = node.value.cols();
                    let len_a = self.nodes[a.0].value.data().len();
                    let ga = slot(&mut grads, *a, len_a);
                    axpy(&mut ga[start * c..start * c + g.len()], 1.0, &g);
                }
                Op::Relu(a) => {
                    let out = node.value.data();
                    let ga = slot(&mut grads, *a, g.len());
                    for ((x, &gi), &o) in ga.iter_mut().zip(&g).zip(out) {
                        if o > 0.0 {
                            *x += gi;
                        }
                    }
                }
                Op::GatherRows(a, index) => {
                    let c = node.value.cols();
                    let len_a = self.nodes[a.0].value.data().len();
                    let ga = slot(&mut grads, *a, len_a);
                    for (r, &src) in index.iter().enumerate() {
                        axpy(&mut ga[src * c..(src + 1) * c], 1.0, &g[r * c..(r + 1) * c]);
                    }
                }
                Op::SegmentMax(a, winner) => {
                    let c = node.value.cols();
                    let len_a = self.nodes[a.0].value.data().len();
                    let ga = slot(&mut grads, *a, len_a);
                    for (k, &r) in winner.iter().enumerate() {
                        if r != usize::MAX {
                            ga[r * c + k % c] += g[k];
                        }
                    }
                }
                Op::SegmentCrossEntropy(a, cache) => {
                    axpy(slot(&mut grads, *a, cache.len()), g[0], cache);
                }
                Op::Sum(a) => {
                    let len_a = self.nodes[a.0].value.data().len();
                    slot(&mut grads, *a, len_a)
                        .iter_mut()
                        .for_each(|x| *x += g[0]);
                }
                Op::SumSquares(a) => {
                    let va = self.nodes[a.0].value.data();
                    let ga = slot(&mut grads, *a, va.len());
                    for (x, &v) in ga.iter_mut().zip(va) {
                        *x += 2.0 * v * g[0];
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi += alpha * xi);
}
