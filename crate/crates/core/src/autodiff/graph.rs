use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::array::Array;
use super::params::{ParamId, ParameterStore};
use crate::error::{EmrError, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, usize),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sum(Var),
    SumRows(Var),
    SumGroups(Var, usize),
    GatherRows(Var, Vec<usize>),
    Pick(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order and the graph can never contain a cycle.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Array>>,
    consts: Vec<Array>,
    params: HashMap<ParamId, Var>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Array, b: &Array) -> EmrError {
    EmrError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn as_matrix(a: &Array) -> Vec<usize> {
    vec![a.rows(), a.cols()]
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            consts: Vec::new(),
            params: HashMap::new(),
        }
    }

    /// Unique per graph instance; lets callers detect handles from another graph.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn grad(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Array, op: Op, name: &'static str) -> Result<Var> {
        if !value.all_finite() {
            return Err(EmrError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input; gradients are tracked for it but never leave the graph.
    pub fn constant(&mut self, value: Array) -> Result<Var> {
        self.push(value, Op::Leaf, "constant")
    }

    /// The node for a learnable parameter; repeated requests reuse one node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Parameter nodes touched by this graph with their gradients.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Array)> {
        self.params
            .iter()
            .filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g)))
    }

    fn binary_same(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if as_matrix(x) != as_matrix(y) {
            return Err(mismatch(op, x, y));
        }
        Ok(())
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Array {
        let x = self.value(a);
        Array::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "add")?;
        let x = self.value(a);
        let y = self.value(b);
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Array::new(x.shape().to_vec(), data);
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "sub")?;
        let x = self.value(a);
        let y = self.value(b);
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Array::new(x.shape().to_vec(), data);
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "mul")?;
        let x = self.value(a);
        let y = self.value(b);
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Array::new(x.shape().to_vec(), data);
        self.push(out, Op::Mul(a, b), "mul")
    }

    /// `x + b` with the `1 x c` row `b` added to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(mismatch("add_bias", xv, bv));
        }
        let c = xv.cols();
        let bias = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias[i % c])
            .collect();
        let out = Array::matrix(xv.rows(), c, data);
        self.push(out, Op::AddBias(x, b), "add_bias")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.map(a, |v| v * s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.map(a, |v| v + s);
        self.push(out, Op::AddScalar(a), "add_scalar")
    }

    /// Elementwise product with a constant array of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Array) -> Result<Var> {
        let x = self.value(a);
        if as_matrix(x) != as_matrix(&c) {
            return Err(mismatch("mul_const", x, &c));
        }
        let data = x.data().iter().zip(c.data()).map(|(p, q)| p * q).collect();
        let out = Array::new(x.shape().to_vec(), data);
        self.consts.push(c);
        let idx = self.consts.len() - 1;
        self.push(out, Op::MulConst(a, idx), "mul_const")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (n, k, m) = (x.rows(), x.cols(), y.cols());
        if y.rows() != k {
            return Err(mismatch("matmul", x, y));
        }
        let mut out = vec![0.0; n * m];
        let (xd, yd) = (x.data(), y.data());
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let s = xd[i * k + p];
                if s == 0.0 {
                    continue;
                }
                let yrow = &yd[p * m..(p + 1) * m];
                for (o, w) in row.iter_mut().zip(yrow) {
                    *o += s * w;
                }
            }
        }
        self.push(Array::matrix(n, m, out), Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = transposed(self.value(a));
        self.push(out, Op::Transpose(a), "transpose")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a), "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |v| v.max(0.0));
        self.push(out, Op::Relu(a), "relu")
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            data.extend(softmax_slice(x.row_slice(r)));
        }
        let out = Array::matrix(x.rows(), c, data);
        self.push(out, Op::SoftmaxRows(a), "softmax")
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            let row = x.row_slice(r);
            let lse = log_sum_exp(row);
            data.extend(row.iter().map(|v| v - lse));
        }
        let out = Array::matrix(x.rows(), c, data);
        self.push(out, Op::LogSoftmaxRows(a), "log_softmax")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Array::matrix(rows, cols, data);
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]), self.value(p)));
            }
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols;
        let out = Array::matrix(rows, cols, data);
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.cols() {
            return Err(EmrError::ShapeMismatch {
                op: "slice_cols",
                lhs: as_matrix(x),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row_slice(r)[start..start + len]);
        }
        let out = Array::matrix(x.rows(), len, data);
        self.push(out, Op::SliceCols(a, start), "slice_cols")
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.rows() {
            return Err(EmrError::ShapeMismatch {
                op: "slice_rows",
                lhs: as_matrix(x),
                rhs: vec![start, len],
            });
        }
        let c = x.cols();
        let data = x.data()[start * c..(start + len) * c].to_vec();
        let out = Array::matrix(len, c, data);
        self.push(out, Op::SliceRows(a, start), "slice_rows")
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    /// Sum of every element, as a `1 x 1` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Array::scalar(s), Op::Sum(a), "sum")
    }

    /// Column sums: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let c = x.cols();
        let mut data = vec![0.0; c];
        for r in 0..x.rows() {
            for (o, v) in data.iter_mut().zip(x.row_slice(r)) {
                *o += v;
            }
        }
        self.push(Array::row(data), Op::SumRows(a), "sum_rows")
    }

    /// Sums each run of `group` consecutive rows: `(n*group) x c -> n x c`.
    pub fn sum_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        let x = self.value(a);
        if group == 0 || x.rows() % group != 0 {
            return Err(EmrError::ShapeMismatch {
                op: "sum_groups",
                lhs: as_matrix(x),
                rhs: vec![group],
            });
        }
        let c = x.cols();
        let n = x.rows() / group;
        let mut data = vec![0.0; n * c];
        for r in 0..x.rows() {
            let dst = &mut data[(r / group) * c..(r / group + 1) * c];
            for (o, v) in dst.iter_mut().zip(x.row_slice(r)) {
                *o += v;
            }
        }
        self.push(Array::matrix(n, c, data), Op::SumGroups(a, group), "sum_groups")
    }

    /// Embedding lookup: stacks `table[ids[i]]` into an `ids.len() x c` matrix.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let c = t.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= t.rows() {
                return Err(EmrError::TokenOutOfVocabulary {
                    token: id,
                    vocab: t.rows(),
                });
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let out = Array::matrix(ids.len(), c, data);
        self.push(out, Op::GatherRows(table, ids.to_vec()), "gather_rows")
    }

    /// Single element as a `1 x 1` scalar.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let x = self.value(a);
        if r >= x.rows() || c >= x.cols() {
            return Err(EmrError::ShapeMismatch {
                op: "pick",
                lhs: as_matrix(x),
                rhs: vec![r, c],
            });
        }
        let v = x.get(r, c);
        self.push(Array::scalar(v), Op::Pick(a, r, c), "pick")
    }

    /// Reverse sweep from a scalar root. Gradients of every node reachable
    /// from `root` are summed over all of its consumers.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.value(root).shape().to_vec();
        if !self.value(root).is_scalar() {
            return Err(EmrError::NonScalarRoot(shape));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(Array::full(&shape, 1.0));

        for i in (0..=root.0).rev() {
            let Some(dy) = self.grads[i].take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &dy);
            self.grads[i] = Some(dy);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Array) {
        match &mut self.grads[v.0] {
            Some(g) => g.add_scaled(&delta, 1.0),
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Array::new(shape, delta.into_data()));
            }
        }
    }

    fn propagate(&mut self, i: usize, op: &Op, dy: &Array) {
        let shape_of = |g: &Self, v: Var| g.nodes[v.0].value.shape().to_vec();
        match *op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                self.accumulate(a, dy.clone());
                self.accumulate(b, dy.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, dy.clone());
                let neg = dy.data().iter().map(|v| -v).collect();
                self.accumulate(b, Array::new(dy.shape().to_vec(), neg));
            }
            Op::Mul(a, b) => {
                let da = zip_with(dy, self.value(b), |g, y| g * y);
                let db = zip_with(dy, self.value(a), |g, x| g * x);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::AddBias(x, b) => {
                let c = dy.cols();
                let mut db = vec![0.0; c];
                for (j, g) in dy.data().iter().enumerate() {
                    db[j % c] += g;
                }
                self.accumulate(x, dy.clone());
                let bs = shape_of(self, b);
                self.accumulate(b, Array::new(bs, db));
            }
            Op::Scale(a, s) => {
                let d = dy.data().iter().map(|v| v * s).collect();
                self.accumulate(a, Array::new(dy.shape().to_vec(), d));
            }
            Op::AddScalar(a) => self.accumulate(a, dy.clone()),
            Op::MulConst(a, idx) => {
                let d = zip_with(dy, &self.consts[idx], |g, c| g * c);
                self.accumulate(a, d);
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let (n, k, m) = (x.rows(), x.cols(), y.cols());
                let (xd, yd, gd) = (x.data(), y.data(), dy.data());
                // dA = dY * B^T
                let mut da = vec![0.0; n * k];
                for r in 0..n {
                    let grow = &gd[r * m..(r + 1) * m];
                    for p in 0..k {
                        let yrow = &yd[p * m..(p + 1) * m];
                        da[r * k + p] = grow.iter().zip(yrow).map(|(g, w)| g * w).sum();
                    }
                }
                // dB = A^T * dY
                let mut db = vec![0.0; k * m];
                for r in 0..n {
                    let grow = &gd[r * m..(r + 1) * m];
                    for p in 0..k {
                        let s = xd[r * k + p];
                        if s == 0.0 {
                            continue;
                        }
                        for (o, g) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                            *o += s * g;
                        }
                    }
                }
                let (sa, sb) = (shape_of(self, a), shape_of(self, b));
                self.accumulate(a, Array::new(sa, da));
                self.accumulate(b, Array::new(sb, db));
            }
            Op::Transpose(a) => {
                let t = transposed(dy);
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, t.into_data()));
            }
            Op::Sigmoid(a) => {
                let d = zip_with(dy, &self.nodes[i].value, |g, y| g * y * (1.0 - y));
                self.accumulate(a, d);
            }
            Op::Tanh(a) => {
                let d = zip_with(dy, &self.nodes[i].value, |g, y| g * (1.0 - y * y));
                self.accumulate(a, d);
            }
            Op::Relu(a) => {
                let d = zip_with(dy, self.value(a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row_slice(r);
                    let gr = &dy.data()[r * c..(r + 1) * c];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for j in 0..c {
                        d[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let c = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let yr = y.row_slice(r);
                    let gr = &dy.data()[r * c..(r + 1) * c];
                    let total: f64 = gr.iter().sum();
                    for j in 0..c {
                        d[r * c + j] = gr[j] - yr[j].exp() * total;
                    }
                }
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::ConcatCols(ref parts) => {
                let rows = dy.rows();
                let total = dy.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&dy.data()[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    let sp = shape_of(self, p);
                    self.accumulate(p, Array::new(sp, d));
                }
            }
            Op::ConcatRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    let d = dy.data()[offset..offset + n].to_vec();
                    offset += n;
                    let sp = shape_of(self, p);
                    self.accumulate(p, Array::new(sp, d));
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(a);
                let (rows, cols, len) = (x.rows(), x.cols(), dy.cols());
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&dy.data()[r * len..(r + 1) * len]);
                }
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::SliceRows(a, start) => {
                let x = self.value(a);
                let cols = x.cols();
                let mut d = vec![0.0; x.len()];
                d[start * cols..start * cols + dy.len()].copy_from_slice(dy.data());
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::Sum(a) => {
                let g = dy.data()[0];
                let sa = shape_of(self, a);
                self.accumulate(a, Array::full(&sa, g));
            }
            Op::SumRows(a) => {
                let x = self.value(a);
                let mut d = Vec::with_capacity(x.len());
                for _ in 0..x.rows() {
                    d.extend_from_slice(dy.data());
                }
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::SumGroups(a, group) => {
                let x = self.value(a);
                let c = x.cols();
                let mut d = Vec::with_capacity(x.len());
                for r in 0..x.rows() {
                    d.extend_from_slice(&dy.data()[(r / group) * c..(r / group + 1) * c]);
                }
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
            Op::GatherRows(table, ref ids) => {
                let t = self.value(table);
                let c = t.cols();
                let mut d = vec![0.0; t.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for (o, g) in d[id * c..(id + 1) * c]
                        .iter_mut()
                        .zip(&dy.data()[r * c..(r + 1) * c])
                    {
                        *o += g;
                    }
                }
                let st = shape_of(self, table);
                self.accumulate(table, Array::new(st, d));
            }
            Op::Pick(a, r, c) => {
                let x = self.value(a);
                let mut d = vec![0.0; x.len()];
                d[r * x.cols() + c] = dy.data()[0];
                let sa = shape_of(self, a);
                self.accumulate(a, Array::new(sa, d));
            }
        }
    }
}

fn zip_with(a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
    let d = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.shape().to_vec(), d)
}

fn transposed(x: &Array) -> Array {
    let (r, c) = (x.rows(), x.cols());
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = x.data()[i * c + j];
        }
    }
    Array::matrix(c, r, data)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(Array::row(vec![0.0, 0.0])).unwrap();
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut g = Graph::new();
        let x = g.constant(Array::scalar(0.0)).unwrap();
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.scalar_value(y), 0.5);
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut g = Graph::new();
        let i = g.constant(Array::identity(3)).unwrap();
        let a = Array::matrix(3, 3, (1..=9).map(f64::from).collect());
        let av = g.constant(a.clone()).unwrap();
        let y = g.matmul(i, av).unwrap();
        assert_eq!(g.value(y), &a);
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.constant(Array::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn shared_node_accumulates_both_consumers() {
        // f = x*x + 3x, df/dx = 2x + 3
        let mut g = Graph::new();
        let x = g.constant(Array::scalar(1.5)).unwrap();
        let sq = g.mul(x, x).unwrap();
        let lin = g.scale(x, 3.0).unwrap();
        let f = g.add(sq, lin).unwrap();
        g.backward(f).unwrap();
        assert!((g.grad(x).unwrap().data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sum_of_softmax_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.constant(Array::row(vec![0.3, -1.2, 2.5, 0.0])).unwrap();
        let p = g.softmax(x).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        for v in g.grad(x).unwrap().data() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.constant(Array::row(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(EmrError::NonScalarRoot(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(Array::zeros(&[2, 3])).unwrap();
        let b = g.constant(Array::zeros(&[2, 3])).unwrap();
        assert!(matches!(g.matmul(a, b), Err(EmrError::ShapeMismatch { .. })));
        let c = g.constant(Array::zeros(&[3, 2])).unwrap();
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let x = g.constant(Array::scalar(1e300)).unwrap();
        assert!(matches!(g.scale(x, 1e300), Err(EmrError::NonFinite { .. })));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut g = Graph::new();
        let x = g.constant(Array::row(vec![1000.0, 1000.0, -1000.0])).unwrap();
        let y = g.softmax(x).unwrap();
        let v = g.value(y).data();
        assert!((v[0] - 0.5).abs() < 1e-12 && v[2] == 0.0);
    }
}
