//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation applied during a forward pass as an
//! append-only list of nodes. Because each node only refers to earlier
//! nodes, walking the list backwards is a valid topological order for the
//! chain rule. Handles ([`Var`]) are plain indices into the tape.
//!
//! ```
//! use ficots::numerics::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

use std::ops::Range;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use super::NumericsError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Weighted gather: output row `g` is `sum(w * src[idx])` over `groups[g]`.
pub type Groups = Vec<Vec<(usize, f64)>>;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        src: Var,
        rows: Range<usize>,
        cols: Range<usize>,
    },
    SelectRows {
        src: Var,
        index: Vec<usize>,
    },
    MeanAxis {
        src: Var,
        axis: usize,
    },
    Aggregate {
        src: Var,
        groups: Groups,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConvexMix {
        gate: Var,
        a: Var,
        b: Var,
    },
    Sum(Var),
    MeanAll(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// Logistic function clamped to the open unit interval so that saturated
/// inputs never produce exact 0 or 1.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 || ta.shape().len() > 2 || tb.shape().len() > 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = Tensor::matrix(m, n, matmul_raw(ta.data(), tb.data(), m, k, n));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `x * w^T + bias` with `w` stored as `out x in`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var, NumericsError> {
        let wt = self.transpose(w);
        let y = self.matmul(x, wt)?;
        match bias {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(shape_err("add_row", tx, tb));
        }
        let c = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tb.data()[i % c])
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(out, Op::AddRow(x, bias), ng))
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|v| f(*v)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map_op(a, |v| v * c, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_op(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_op(a, sigmoid_scalar, Op::Sigmoid(a))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows_value(self.value(a));
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Concatenates matrices along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or(NumericsError::Empty("concat"))?;
        let t0 = self.value(*first);
        let out = match axis {
            0 => {
                let c = t0.cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let t = self.value(*p);
                    if t.cols() != c {
                        return Err(shape_err("concat", t0, t));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::matrix(rows, c, data)
            }
            1 => {
                let r = t0.rows();
                let mut total = 0;
                for p in parts {
                    let t = self.value(*p);
                    if t.rows() != r {
                        return Err(shape_err("concat", t0, t));
                    }
                    total += t.cols();
                }
                let mut data = Vec::with_capacity(r * total);
                for i in 0..r {
                    for p in parts {
                        data.extend_from_slice(self.value(*p).row(i));
                    }
                }
                Tensor::matrix(r, total, data)
            }
            _ => return Err(NumericsError::Axis { op: "concat", axis }),
        };
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Rectangular sub-block of a matrix.
    pub fn slice(&mut self, src: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var, NumericsError> {
        let t = self.value(src);
        if rows.end > t.rows() || cols.end > t.cols() || rows.start > rows.end || cols.start > cols.end {
            return Err(NumericsError::Index {
                op: "slice",
                index: rows.end.max(cols.end),
                bound: t.rows().max(t.cols()),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            data.extend_from_slice(&t.row(r)[cols.clone()]);
        }
        let out = Tensor::matrix(rows.len(), cols.len(), data);
        let ng = self.ng(src);
        Ok(self.push(out, Op::Slice { src, rows, cols }, ng))
    }

    pub fn select_rows(&mut self, src: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(src);
        let c = t.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= t.rows() {
                return Err(NumericsError::Index {
                    op: "select_rows",
                    index: i,
                    bound: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(index.len(), c, data);
        let ng = self.ng(src);
        Ok(self.push(
            out,
            Op::SelectRows {
                src,
                index: index.to_vec(),
            },
            ng,
        ))
    }

    /// Mean over axis 0 (gives `1 x cols`) or axis 1 (gives `rows x 1`).
    pub fn mean_axis(&mut self, src: Var, axis: usize) -> Result<Var, NumericsError> {
        let t = self.value(src);
        let (r, c) = (t.rows(), t.cols());
        let out = match axis {
            0 => {
                let column: Vec<f64> = (0..c).map(|j| shifted_mean((0..r).map(|i| t.get(i, j)))).collect();
                Tensor::matrix(1, c, column)
            }
            1 => Tensor::matrix(r, 1, (0..r).map(|i| shifted_mean(t.row(i).iter().copied())).collect()),
            _ => return Err(NumericsError::Axis { op: "mean_axis", axis }),
        };
        let ng = self.ng(src);
        Ok(self.push(out, Op::MeanAxis { src, axis }, ng))
    }

    /// Weighted gather-sum over row index lists; an empty group yields a
    /// zero row.
    pub fn aggregate(&mut self, src: Var, groups: Groups) -> Result<Var, NumericsError> {
        let t = self.value(src);
        let c = t.cols();
        let mut data = vec![0.0; groups.len() * c];
        for (g, members) in groups.iter().enumerate() {
            let out = &mut data[g * c..(g + 1) * c];
            for &(idx, w) in members {
                if idx >= t.rows() {
                    return Err(NumericsError::Index {
                        op: "aggregate",
                        index: idx,
                        bound: t.rows(),
                    });
                }
                for (o, v) in out.iter_mut().zip(t.row(idx)) {
                    *o += w * v;
                }
            }
        }
        let out = Tensor::matrix(groups.len(), c, data);
        let ng = self.ng(src);
        Ok(self.push(out, Op::Aggregate { src, groups }, ng))
    }

    /// Arithmetic mean of the indexed rows for each group.
    pub fn scatter_mean(&mut self, src: Var, groups: &[Vec<usize>]) -> Result<Var, NumericsError> {
        let weighted = groups
            .iter()
            .map(|g| {
                let w = 1.0 / g.len().max(1) as f64;
                g.iter().map(|&i| (i, w)).collect()
            })
            .collect();
        self.aggregate(src, weighted)
    }

    /// Per-row normalization over the last axis using population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, NumericsError> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = tx.cols();
        if tg.len() != d || tb.len() != d {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let r = tx.rows();
        let mut xhat = vec![0.0; r * d];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let row = tx.row(i);
            let mean = shifted_mean(row.iter().copied());
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                out[i * d + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// `gate * a + (1 - gate) * b`, elementwise.
    ///
    /// The value is clamped into `[min(a, b), max(a, b)]` to absorb rounding;
    /// the gradient is that of the unclamped expression.
    pub fn convex_mix(&mut self, gate: Var, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (tg, ta, tb) = (self.value(gate), self.value(a), self.value(b));
        if tg.shape() != ta.shape() {
            return Err(shape_err("convex_mix", tg, ta));
        }
        if ta.shape() != tb.shape() {
            return Err(shape_err("convex_mix", ta, tb));
        }
        let data = tg
            .data()
            .iter()
            .zip(ta.data().iter().zip(tb.data()))
            .map(|(&g, (&x, &y))| (g * x + (1.0 - g) * y).clamp(x.min(y), x.max(y)))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.ng(gate) || self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::ConvexMix { gate, a, b }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let s = shifted_mean(self.value(a).data().iter().copied());
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::MeanAll(a), ng)
    }

    /// Propagates gradients from a scalar output back to every node that
    /// needs one.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericsError> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(NumericsError::NotScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => {
                for (a, d) in t.data_mut().iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => {
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, delta).expect("gradient shape"));
            }
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.ng(*a) {
                    self.accumulate(grads, *a, matmul_nt(gd, tb.data(), m, n, k));
                }
                if self.ng(*b) {
                    self.accumulate(grads, *b, matmul_tn(ta.data(), gd, m, k, n));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, gd.to_vec());
                let c = self.value(*b).len();
                let mut db = vec![0.0; c];
                for (i, v) in gd.iter().enumerate() {
                    db[i % c] += v;
                }
                self.accumulate(grads, *b, db);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let d = gd.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    self.accumulate(grads, *a, d);
                }
                if self.ng(*b) {
                    let d = gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, gd.iter().map(|v| v * c).collect()),
            Op::Relu(a) => {
                let d = gd
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for i in 0..y.rows() {
                    let yr = y.row(i);
                    let gr = &gd[i * c..(i + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Transpose(a) => {
                let back = g.transpose();
                self.accumulate(grads, *a, back.into_data());
            }
            Op::Concat { parts, axis } => {
                let total_cols = g.cols();
                let mut offset = 0;
                for p in parts {
                    let t = self.value(*p);
                    let (r, c) = (t.rows(), t.cols());
                    if *axis == 0 {
                        let n = r * c;
                        self.accumulate(grads, *p, gd[offset..offset + n].to_vec());
                        offset += n;
                    } else {
                        let mut d = Vec::with_capacity(r * c);
                        for i in 0..r {
                            d.extend_from_slice(&gd[i * total_cols + offset..i * total_cols + offset + c]);
                        }
                        self.accumulate(grads, *p, d);
                        offset += c;
                    }
                }
            }
            Op::Slice { src, rows, cols } => {
                let t = self.value(*src);
                let tc = t.cols();
                let mut d = vec![0.0; t.len()];
                let w = cols.len();
                for (k, r) in rows.clone().enumerate() {
                    d[r * tc + cols.start..r * tc + cols.end].copy_from_slice(&gd[k * w..(k + 1) * w]);
                }
                self.accumulate(grads, *src, d);
            }
            Op::SelectRows { src, index } => {
                let t = self.value(*src);
                let c = t.cols();
                let mut d = vec![0.0; t.len()];
                for (k, &i) in index.iter().enumerate() {
                    for j in 0..c {
                        d[i * c + j] += gd[k * c + j];
                    }
                }
                self.accumulate(grads, *src, d);
            }
            Op::MeanAxis { src, axis } => {
                let t = self.value(*src);
                let (r, c) = (t.rows(), t.cols());
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = if *axis == 0 { gd[j] / r as f64 } else { gd[i] / c as f64 };
                    }
                }
                self.accumulate(grads, *src, d);
            }
            Op::Aggregate { src, groups } => {
                let t = self.value(*src);
                let c = t.cols();
                let mut d = vec![0.0; t.len()];
                for (gi, members) in groups.iter().enumerate() {
                    let gr = &gd[gi * c..(gi + 1) * c];
                    for &(idx, w) in members {
                        for (o, v) in d[idx * c..(idx + 1) * c].iter_mut().zip(gr) {
                            *o += w * v;
                        }
                    }
                }
                self.accumulate(grads, *src, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let tg = self.value(*gamma).data();
                let d = tg.len();
                let r = inv_std.len();
                if self.ng(*x) {
                    let mut dx = vec![0.0; r * d];
                    for i in 0..r {
                        let gr = &gd[i * d..(i + 1) * d];
                        let hr = &xhat[i * d..(i + 1) * d];
                        let dh: Vec<f64> = gr.iter().zip(tg).map(|(a, b)| a * b).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dx[i * d + j] = inv_std[i] / d as f64 * (d as f64 * dh[j] - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for i in 0..r {
                    for j in 0..d {
                        dgamma[j] += gd[i * d + j] * xhat[i * d + j];
                        dbeta[j] += gd[i * d + j];
                    }
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::ConvexMix { gate, a, b } => {
                let (tg, ta, tb) = (self.value(*gate), self.value(*a), self.value(*b));
                if self.ng(*gate) {
                    let d = gd
                        .iter()
                        .zip(ta.data().iter().zip(tb.data()))
                        .map(|(g, (x, y))| g * (x - y))
                        .collect();
                    self.accumulate(grads, *gate, d);
                }
                if self.ng(*a) {
                    let d = gd.iter().zip(tg.data()).map(|(g, s)| g * s).collect();
                    self.accumulate(grads, *a, d);
                }
                if self.ng(*b) {
                    let d = gd.iter().zip(tg.data()).map(|(g, s)| g * (1.0 - s)).collect();
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![gd[0]; n]);
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![gd[0] / n as f64; n]);
            }
        }
    }
}

/// Mean computed as `x0 + mean(x - x0)`, exact for constant input.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut values = values.peekable();
    let Some(&pivot) = values.peek() else {
        return 0.0;
    };
    let (mut n, mut acc) = (0usize, 0.0);
    for v in values {
        acc += v - pivot;
        n += 1;
    }
    pivot + acc / n as f64
}

pub(crate) fn softmax_rows_value(t: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(t.len());
    for i in 0..t.rows() {
        let row = t.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        data.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}
