//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends a node whose inputs already exist on the tape, so node
//! order is a topological order and [`Tape::backward`] only has to walk the
//! nodes from the output back to index 0. Shape mismatches are programming
//! errors and panic with both shapes in the message.

use crate::tensor::{kernels, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Tensor),
    Relu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Tensor,
        inv_std: Vec<f64>,
    },
    Embed {
        table: Var,
        indices: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    Transpose(Var),
    RowDiff {
        x: Var,
        pairs: Vec<(usize, usize)>,
    },
    WeightedSum {
        x: Var,
        weights: Tensor,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node on a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, materializing zeros of `like`'s shape when absent.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) {
    assert!(
        a.shape() == b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Consumes the tape, returning every node value in creation order.
    pub fn into_values(self) -> Vec<Tensor> {
        self.nodes.into_iter().map(|n| n.value).collect()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2();
        let (k2, n) = bv.dims2();
        assert!(
            k == k2,
            "matmul: shape mismatch {:?} x {:?}",
            av.shape(),
            bv.shape()
        );
        let out = Tensor::matrix(m, n, kernels::matmul(av.data(), bv.data(), m, k, n));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`; `b` is stored as `out x in` like a linear layer weight.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2();
        let (n, k2) = bv.dims2();
        assert!(
            k == k2,
            "matmul_nt: shape mismatch {:?} x {:?}^T",
            av.shape(),
            bv.shape()
        );
        let out = Tensor::matrix(m, n, kernels::matmul_nt(av.data(), bv.data(), m, k, n));
        self.push(out, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", av, bv);
        let mut out = av.clone();
        out.add_assign(bv);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("sub", av, bv);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Sub(a, b))
    }

    /// Adds the vector `bias` to every row of matrix `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (_, c) = xv.dims2();
        assert!(
            bv.shape() == [c],
            "add_row: shape mismatch {:?} + row {:?}",
            xv.shape(),
            bv.shape()
        );
        let mut out = xv.clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (o, b) in chunk.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddScalar(x))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Var {
        let xv = self.value(x);
        same_shape("mul_const", xv, &c);
        let data = xv.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::MulConst(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let (_, c) = out.dims2();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// `gain * x_hat + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (r, c) = xv.dims2();
        let (gv, bv) = (self.value(gain), self.value(bias));
        assert!(
            gv.shape() == [c] && bv.shape() == [c],
            "layer_norm: shape mismatch {:?} with gain {:?} bias {:?}",
            xv.shape(),
            gv.shape(),
            bv.shape()
        );
        let mut normed = xv.clone();
        let mut inv_std = Vec::with_capacity(r);
        for row in normed.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let mut out = normed.clone();
        for row in out.data_mut().chunks_mut(c) {
            for ((v, g), b) in row.iter_mut().zip(gv.data()).zip(bv.data()) {
                *v = *v * g + b;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        )
    }

    /// Gathers rows `indices` of `table`.
    pub fn embed(&mut self, table: Var, indices: &[usize]) -> Var {
        let tv = self.value(table);
        let (rows, c) = tv.dims2();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < rows, "embed: index {i} out of range for table {:?}", tv.shape());
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::matrix(indices.len(), c, data);
        self.push(
            out,
            Op::Embed {
                table,
                indices: indices.to_vec(),
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let v = self.value(p);
                assert!(
                    v.rows() == rows,
                    "concat_cols: shape mismatch {:?} vs {rows} rows",
                    v.shape()
                );
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(rows, total, data), Op::ConcatCols(parts.to_vec()))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let xv = self.value(x);
        let (r, c) = xv.dims2();
        assert!(start < end && end <= c, "slice_cols {start}..{end} of {:?}", xv.shape());
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&xv.row(i)[start..end]);
        }
        self.push(Tensor::matrix(r, end - start, data), Op::SliceCols { x, start })
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let xv = self.value(x);
        let (r, c) = xv.dims2();
        assert!(start < end && end <= r, "slice_rows {start}..{end} of {:?}", xv.shape());
        let data = xv.data()[start * c..end * c].to_vec();
        self.push(Tensor::matrix(end - start, c, data), Op::SliceRows { x, start })
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Row `r` of the output is `x[hi] - x[lo]` for `pairs[r] = (lo, hi)`.
    pub fn row_diff(&mut self, x: Var, pairs: &[(usize, usize)]) -> Var {
        let xv = self.value(x);
        let (rows, c) = xv.dims2();
        let mut data = Vec::with_capacity(pairs.len() * c);
        for &(lo, hi) in pairs {
            assert!(lo < rows && hi < rows, "row_diff: ({lo},{hi}) out of range for {:?}", xv.shape());
            data.extend(xv.row(hi).iter().zip(xv.row(lo)).map(|(a, b)| a - b));
        }
        self.push(
            Tensor::matrix(pairs.len(), c, data),
            Op::RowDiff {
                x,
                pairs: pairs.to_vec(),
            },
        )
    }

    /// Scalar `sum(x * weights)` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Var {
        let xv = self.value(x);
        same_shape("weighted_sum", xv, &weights);
        let total = kernels::dot(xv.data(), weights.data());
        self.push(Tensor::scalar(total), Op::WeightedSum { x, weights })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// Backpropagates from the scalar `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        let seed = self.value(out);
        assert!(
            seed.len() == 1,
            "backward needs a scalar output, got shape {:?}",
            seed.shape()
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::full(seed.shape(), 1.0));

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2();
                let n = bv.cols();
                let da = kernels::matmul_nt(g.data(), bv.data(), m, n, k);
                let db = kernels::matmul_tn(av.data(), g.data(), m, k, n);
                accumulate(grads, *a, Tensor::matrix(m, k, da));
                accumulate(grads, *b, Tensor::matrix(k, n, db));
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2();
                let n = bv.rows();
                let da = kernels::matmul(g.data(), bv.data(), m, n, k);
                let db = kernels::matmul_tn(g.data(), av.data(), m, n, k);
                accumulate(grads, *a, Tensor::matrix(m, k, da));
                accumulate(grads, *b, Tensor::matrix(n, k, db));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::AddRow(x, bias) => {
                let c = g.cols();
                let mut db = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *bias, Tensor::vector(db));
            }
            Op::Scale(x, f) => accumulate(grads, *x, g.map(|v| v * f)),
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::MulConst(x, c) => {
                let data = g.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
                accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data).expect("shape"));
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data).expect("shape"));
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut dx = g.clone();
                for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let inner = kernels::dot(drow, yrow);
                    for (d, yv) in drow.iter_mut().zip(yrow) {
                        *d = yv * (*d - inner);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let c = g.cols();
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                let mut dx = Tensor::zeros(g.shape());
                let mut dxhat = vec![0.0; c];
                for (r, &is) in inv_std.iter().enumerate() {
                    let grow = g.row(r);
                    let nrow = normed.row(r);
                    for k in 0..c {
                        dgain[k] += grow[k] * nrow[k];
                        dbias[k] += grow[k];
                        dxhat[k] = grow[k] * gv.data()[k];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dn = kernels::dot(&dxhat, nrow);
                    let scale = is / c as f64;
                    for (k, out) in dx.row_mut(r).iter_mut().enumerate() {
                        *out = scale * (c as f64 * dxhat[k] - sum_d - nrow[k] * sum_dn);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gain, Tensor::vector(dgain));
                accumulate(grads, *bias, Tensor::vector(dbias));
            }
            Op::Embed { table, indices } => {
                let tv = self.value(*table);
                let mut dt = Tensor::zeros(tv.shape());
                for (r, &i) in indices.iter().enumerate() {
                    for (d, v) in dt.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        data.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(grads, p, Tensor::matrix(rows, w, data));
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.shape());
                let w = g.cols();
                for r in 0..g.rows() {
                    dx.row_mut(r)[*start..*start + w].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.shape());
                let c = g.cols();
                dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *x, dx);
            }
            Op::Transpose(x) => accumulate(grads, *x, g.transpose()),
            Op::RowDiff { x, pairs } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.shape());
                for (r, &(lo, hi)) in pairs.iter().enumerate() {
                    for (d, v) in dx.row_mut(hi).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                    for (d, v) in dx.row_mut(lo).iter_mut().zip(g.row(r)) {
                        *d -= v;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::WeightedSum { x, weights } => {
                let s = g.item();
                accumulate(grads, *x, weights.map(|w| w * s));
            }
            Op::Sum(x) => {
                let s = g.item();
                accumulate(grads, *x, Tensor::full(self.value(*x).shape(), s));
            }
        }
    }
}
