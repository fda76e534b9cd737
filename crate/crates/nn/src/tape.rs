use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;

use crate::tensor::{matmul, matmul_at, matmul_bt};
use crate::{Group, NnError, ParamId, ParamStore, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulConst(usize, Vec<f64>),
    Scale(usize, f64),
    Shift(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    LayerNorm {
        x: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    MeanRows(usize),
    Sum(usize),
    Softmax(usize),
    Transpose(usize),
    Element {
        x: usize,
        r: usize,
        c: usize,
    },
    Min(usize, usize),
    Max(usize, usize),
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records one forward pass. Nodes are appended in evaluation order, so the
/// node index order is a topological order and backward is a single reverse
/// sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<ParamId, usize>>,
    param_version: Cell<Option<u64>>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, usize)>,
    param_version: Option<u64>,
}

impl Grads {
    /// Gradient of the loss with respect to `v`, if `v` influenced the loss.
    pub fn wrt(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::raw(self.shapes[v.0].clone(), g.clone()))
    }

    /// Adds `scale` times every parameter gradient into the store's
    /// accumulators. Fails if the store has been stepped since recording.
    pub fn accumulate_into(&self, store: &mut ParamStore, scale: f64) -> Result<()> {
        self.accumulate_where(store, |_| Some(scale))
    }

    /// Like [`Grads::accumulate_into`] with a scale per parameter group;
    /// groups mapped to `None` are skipped.
    pub fn accumulate_scaled(
        &self,
        store: &mut ParamStore,
        scale: impl Fn(Group) -> Option<f64>,
    ) -> Result<()> {
        self.accumulate_where(store, scale)
    }

    fn accumulate_where(
        &self,
        store: &mut ParamStore,
        scale: impl Fn(Group) -> Option<f64>,
    ) -> Result<()> {
        if let Some(recorded) = self.param_version {
            if recorded != store.version() {
                return Err(NnError::StaleTape {
                    recorded,
                    current: store.version(),
                });
            }
        }
        for &(id, node) in &self.params {
            if let (Some(g), Some(s)) = (&self.grads[node], scale(store.group(id))) {
                store.accumulate(id, g, s);
            }
        }
        Ok(())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn with<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    fn with2<R>(&self, a: Var, b: Var, f: impl FnOnce(&Tensor, &Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value, &nodes[b.0].value)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.with(v, Tensor::clone)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.with(v, |t| t.shape().to_vec())
    }

    /// First element; the value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.with(v, |t| t.data()[0])
    }

    /// Non-trainable input.
    pub fn leaf(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant_row(&self, data: Vec<f64>) -> Var {
        self.leaf(Tensor::row(data))
    }

    /// Trainable parameter. Repeated calls for the same id share one node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&idx) = self.params.borrow().get(&id) {
            return Var(idx);
        }
        if self.param_version.get().is_none() {
            self.param_version.set(Some(store.version()));
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.borrow_mut().insert(id, v.0);
        v
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.with2(a, b, |x, y| {
            let (m, k) = x.require_rank2("matmul")?;
            let (k2, n) = y.require_rank2("matmul")?;
            if k != k2 {
                return Err(shape_err("matmul", x, y));
            }
            Ok::<_, NnError>(Tensor::raw(vec![m, n], matmul(x.data(), y.data(), m, k, n)))
        })?;
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    fn zip_same(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.with2(a, b, |x, y| {
            if x.shape() != y.shape() {
                return Err(shape_err(op, x, y));
            }
            let data = x
                .data()
                .iter()
                .zip(y.data())
                .map(|(&p, &q)| f(p, q))
                .collect();
            Ok::<_, NnError>(Tensor::raw(x.shape().to_vec(), data))
        })
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |p, q| p + q)?;
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |p, q| p - q)?;
        Ok(self.push(out, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |p, q| p * q)?;
        Ok(self.push(out, Op::Mul(a.0, b.0)))
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("div", a, b, |p, q| p / q)?;
        Ok(self.push(out, Op::Div(a.0, b.0)))
    }

    pub fn minimum(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("minimum", a, b, f64::min)?;
        Ok(self.push(out, Op::Min(a.0, b.0)))
    }

    pub fn maximum(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("maximum", a, b, f64::max)?;
        Ok(self.push(out, Op::Max(a.0, b.0)))
    }

    fn zip_row(
        &self,
        op: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.with2(a, row, |x, r| {
            let (m, n) = x.require_rank2(op)?;
            let (rm, rn) = r.require_rank2(op)?;
            if rm != 1 || rn != n {
                return Err(shape_err(op, x, r));
            }
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                for (j, &v) in x.row_slice(i).iter().enumerate() {
                    data.push(f(v, r.data()[j]));
                }
            }
            Ok::<_, NnError>(Tensor::raw(vec![m, n], data))
        })
    }

    /// `[m,n] + [1,n]`, the row added to every row.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let out = self.zip_row("add_row", a, row, |p, q| p + q)?;
        Ok(self.push(out, Op::AddRow(a.0, row.0)))
    }

    /// `[m,n] * [1,n]`, elementwise per row.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var> {
        let out = self.zip_row("mul_row", a, row, |p, q| p * q)?;
        Ok(self.push(out, Op::MulRow(a.0, row.0)))
    }

    /// Elementwise product with a fixed tensor (masks, dropout keep-masks).
    pub fn mul_const(&self, a: Var, c: &Tensor) -> Result<Var> {
        let out = self.with(a, |x| {
            if x.shape() != c.shape() {
                return Err(shape_err("mul_const", x, c));
            }
            let data = x.data().iter().zip(c.data()).map(|(p, q)| p * q).collect();
            Ok::<_, NnError>(Tensor::raw(x.shape().to_vec(), data))
        })?;
        Ok(self.push(out, Op::MulConst(a.0, c.data().to_vec())))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        self.with(a, |x| {
            Tensor::raw(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        })
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let out = self.map(a, |v| v * c);
        self.push(out, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        let out = self.map(a, |v| v + c);
        self.push(out, Op::Shift(a.0))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.map(a, |v| v.max(0.0));
        self.push(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.map(a, f64::tanh);
        self.push(out, Op::Tanh(a.0))
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = self.map(a, f64::exp);
        self.push(out, Op::Exp(a.0))
    }

    pub fn ln(&self, a: Var) -> Var {
        let out = self.map(a, f64::ln);
        self.push(out, Op::Ln(a.0))
    }

    /// `ln(1 + e^x)`, evaluated without overflow for large `|x|`.
    pub fn softplus(&self, a: Var) -> Var {
        let out = self.map(a, |v| v.max(0.0) + (-v.abs()).exp().ln_1p());
        self.push(out, Op::Softplus(a.0))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.map(a, |v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { x: a.0, lo, hi })
    }

    /// Per-row standardization (no affine part; compose with `mul_row` /
    /// `add_row` for gain and bias).
    pub fn layer_norm(&self, a: Var, eps: f64) -> Result<Var> {
        let (out, xhat, inv_std) = self.with(a, |x| {
            let (m, n) = x.require_rank2("layer_norm")?;
            let mut xhat = Vec::with_capacity(m * n);
            let mut inv_std = Vec::with_capacity(m);
            for i in 0..m {
                let row = x.row_slice(i);
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std.push(is);
                xhat.extend(row.iter().map(|v| (v - mean) * is));
            }
            Ok::<_, NnError>((Tensor::raw(vec![m, n], xhat.clone()), xhat, inv_std))
        })?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: a.0,
                xhat,
                inv_std,
            },
        ))
    }

    /// Concatenates along columns; all parts must have the same row count.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = parts
                .first()
                .ok_or_else(|| NnError::Invalid("concat of zero tensors".into()))?;
            let (m, _) = nodes[first.0].value.require_rank2("concat_cols")?;
            let mut total = 0;
            for p in parts {
                let t = &nodes[p.0].value;
                let (pm, pn) = t.require_rank2("concat_cols")?;
                if pm != m {
                    return Err(shape_err("concat_cols", &nodes[first.0].value, t));
                }
                total += pn;
            }
            let mut data = Vec::with_capacity(m * total);
            for i in 0..m {
                for p in parts {
                    data.extend_from_slice(nodes[p.0].value.row_slice(i));
                }
            }
            Tensor::raw(vec![m, total], data)
        };
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|v| v.0).collect())))
    }

    /// Stacks along rows; all parts must have the same column count.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = parts
                .first()
                .ok_or_else(|| NnError::Invalid("concat of zero tensors".into()))?;
            let (_, n) = nodes[first.0].value.require_rank2("concat_rows")?;
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let t = &nodes[p.0].value;
                let (pm, pn) = t.require_rank2("concat_rows")?;
                if pn != n {
                    return Err(shape_err("concat_rows", &nodes[first.0].value, t));
                }
                rows += pm;
                data.extend_from_slice(t.data());
            }
            Tensor::raw(vec![rows, n], data)
        };
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|v| v.0).collect())))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.with(a, |x| {
            let (m, n) = x.require_rank2("slice_cols")?;
            if start + len > n {
                return Err(NnError::ShapeMismatch {
                    op: "slice_cols",
                    left: x.shape().to_vec(),
                    right: vec![start, start + len],
                });
            }
            let mut data = Vec::with_capacity(m * len);
            for i in 0..m {
                data.extend_from_slice(&x.row_slice(i)[start..start + len]);
            }
            Ok::<_, NnError>(Tensor::raw(vec![m, len], data))
        })?;
        Ok(self.push(out, Op::SliceCols { x: a.0, start }))
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.with(a, |x| {
            let (m, n) = x.require_rank2("slice_rows")?;
            if start + len > m {
                return Err(NnError::ShapeMismatch {
                    op: "slice_rows",
                    left: x.shape().to_vec(),
                    right: vec![start, start + len],
                });
            }
            Ok::<_, NnError>(Tensor::raw(
                vec![len, n],
                x.data()[start * n..(start + len) * n].to_vec(),
            ))
        })?;
        Ok(self.push(out, Op::SliceRows { x: a.0, start }))
    }

    /// Column-wise mean over rows: `[m,n] -> [1,n]`.
    pub fn mean_rows(&self, a: Var) -> Result<Var> {
        let out = self.with(a, |x| {
            let (m, n) = x.require_rank2("mean_rows")?;
            if m == 0 {
                return Err(NnError::Invalid("mean over zero rows".into()));
            }
            let mut data = vec![0.0; n];
            for i in 0..m {
                for (d, v) in data.iter_mut().zip(x.row_slice(i)) {
                    *d += v;
                }
            }
            data.iter_mut().for_each(|d| *d /= m as f64);
            Ok::<_, NnError>(Tensor::raw(vec![1, n], data))
        })?;
        Ok(self.push(out, Op::MeanRows(a.0)))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.with(a, |x| x.data().iter().sum());
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    pub fn mean(&self, a: Var) -> Var {
        let n = self.with(a, Tensor::len).max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Numerically stable softmax over each row.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let out = self.with(a, |x| {
            let (m, n) = x.require_rank2("softmax")?;
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                let row = x.row_slice(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                data.extend(exps.iter().map(|e| e / z));
            }
            Ok::<_, NnError>(Tensor::raw(vec![m, n], data))
        })?;
        Ok(self.push(out, Op::Softmax(a.0)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = self.with(a, |x| {
            let (m, n) = x.require_rank2("transpose")?;
            let mut data = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    data[j * m + i] = x.data()[i * n + j];
                }
            }
            Ok::<_, NnError>(Tensor::raw(vec![n, m], data))
        })?;
        Ok(self.push(out, Op::Transpose(a.0)))
    }

    /// Scalar view of one element.
    pub fn element(&self, a: Var, r: usize, c: usize) -> Result<Var> {
        let v = self.with(a, |x| {
            let (m, n) = x.require_rank2("element")?;
            if r >= m || c >= n {
                return Err(NnError::ShapeMismatch {
                    op: "element",
                    left: x.shape().to_vec(),
                    right: vec![r, c],
                });
            }
            Ok::<_, NnError>(x.get(r, c))
        })?;
        Ok(self.push(Tensor::scalar(v), Op::Element { x: a.0, r, c }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape();
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(NnError::NotScalar(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
            grads[i].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let val = &node.value;
            let len_of = |i: usize| nodes[i].value.len();
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let x = &nodes[*a].value;
                    let y = &nodes[*b].value;
                    let (m, k) = (x.rows(), x.cols());
                    let n = y.cols();
                    let ga = matmul_bt(&g, y.data(), m, n, k);
                    let gb = matmul_at(x.data(), &g, m, k, n);
                    add_into(acc(&mut grads, *a, m * k), &ga);
                    add_into(acc(&mut grads, *b, k * n), &gb);
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    add_into(acc(&mut grads, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    let gb = acc(&mut grads, *b, g.len());
                    for (o, v) in gb.iter_mut().zip(&g) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let x = nodes[*a].value.data();
                    let y = nodes[*b].value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(d, q)| d * q).collect();
                    let gb: Vec<f64> = g.iter().zip(x).map(|(d, p)| d * p).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                    add_into(acc(&mut grads, *b, g.len()), &gb);
                }
                Op::Div(a, b) => {
                    let x = nodes[*a].value.data();
                    let y = nodes[*b].value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(d, q)| d / q).collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(d, (p, q))| -d * p / (q * q))
                        .collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                    add_into(acc(&mut grads, *b, g.len()), &gb);
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let is_min = matches!(node.op, Op::Min(..));
                    let x = nodes[*a].value.data();
                    let y = nodes[*b].value.data();
                    let mut ga = vec![0.0; g.len()];
                    let mut gb = vec![0.0; g.len()];
                    for i in 0..g.len() {
                        let pick_a = if is_min { x[i] <= y[i] } else { x[i] >= y[i] };
                        if pick_a {
                            ga[i] = g[i];
                        } else {
                            gb[i] = g[i];
                        }
                    }
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                    add_into(acc(&mut grads, *b, g.len()), &gb);
                }
                Op::AddRow(a, r) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    let n = val.cols();
                    let gr = acc(&mut grads, *r, n);
                    for chunk in g.chunks(n) {
                        add_into(gr, chunk);
                    }
                }
                Op::MulRow(a, r) => {
                    let n = val.cols();
                    let x = nodes[*a].value.data();
                    let row = nodes[*r].value.data();
                    let ga: Vec<f64> = g.iter().enumerate().map(|(i, d)| d * row[i % n]).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                    let gr = acc(&mut grads, *r, n);
                    for (i, d) in g.iter().enumerate() {
                        gr[i % n] += d * x[i];
                    }
                }
                Op::MulConst(a, c) => {
                    let ga: Vec<f64> = g.iter().zip(c).map(|(d, q)| d * q).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|d| d * c).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Shift(a) => add_into(acc(&mut grads, *a, g.len()), &g),
                Op::Relu(a) => {
                    let x = nodes[*a].value.data();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(x)
                        .map(|(d, &p)| if p > 0.0 { *d } else { 0.0 })
                        .collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(val.data())
                        .map(|(d, s)| d * s * (1.0 - s))
                        .collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(val.data())
                        .map(|(d, t)| d * (1.0 - t * t))
                        .collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(val.data()).map(|(d, e)| d * e).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Ln(a) => {
                    let x = nodes[*a].value.data();
                    let ga: Vec<f64> = g.iter().zip(x).map(|(d, p)| d / p).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Softplus(a) => {
                    let x = nodes[*a].value.data();
                    let ga: Vec<f64> = g.iter().zip(x).map(|(d, &p)| d * sigmoid(p)).collect();
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = nodes[*x].value.data();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(xv)
                        .map(|(d, &p)| if p >= *lo && p <= *hi { *d } else { 0.0 })
                        .collect();
                    add_into(acc(&mut grads, *x, g.len()), &ga);
                }
                Op::LayerNorm { x, xhat, inv_std } => {
                    let n = val.cols();
                    let mut gx = vec![0.0; g.len()];
                    for (i, is) in inv_std.iter().enumerate() {
                        let gr = &g[i * n..(i + 1) * n];
                        let xr = &xhat[i * n..(i + 1) * n];
                        let sum_g: f64 = gr.iter().sum();
                        let sum_gx: f64 = gr.iter().zip(xr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            gx[i * n + j] =
                                is / n as f64 * (n as f64 * gr[j] - sum_g - xr[j] * sum_gx);
                        }
                    }
                    add_into(acc(&mut grads, *x, g.len()), &gx);
                }
                Op::ConcatCols(parts) => {
                    let m = val.rows();
                    let total = val.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pn = nodes[p].value.cols();
                        let gp = acc(&mut grads, p, m * pn);
                        for i in 0..m {
                            for j in 0..pn {
                                gp[i * pn + j] += g[i * total + offset + j];
                            }
                        }
                        offset += pn;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = len_of(p);
                        add_into(acc(&mut grads, p, len), &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::SliceCols { x, start } => {
                    let src = &nodes[*x].value;
                    let (m, n) = (src.rows(), src.cols());
                    let len = val.cols();
                    let gx = acc(&mut grads, *x, m * n);
                    for i in 0..m {
                        for j in 0..len {
                            gx[i * n + start + j] += g[i * len + j];
                        }
                    }
                }
                Op::SliceRows { x, start } => {
                    let n = val.cols();
                    let total = len_of(*x);
                    let gx = acc(&mut grads, *x, total);
                    add_into(&mut gx[start * n..start * n + g.len()], &g);
                }
                Op::MeanRows(a) => {
                    let src = &nodes[*a].value;
                    let (m, n) = (src.rows(), src.cols());
                    let ga = acc(&mut grads, *a, m * n);
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g[j] / m as f64;
                        }
                    }
                }
                Op::Sum(a) => {
                    let len = len_of(*a);
                    let ga = acc(&mut grads, *a, len);
                    ga.iter_mut().for_each(|v| *v += g[0]);
                }
                Op::Softmax(a) => {
                    let n = val.cols();
                    let y = val.data();
                    let mut ga = vec![0.0; g.len()];
                    for (i, (gr, yr)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            ga[i * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Transpose(a) => {
                    let (m, n) = (val.rows(), val.cols());
                    let mut ga = vec![0.0; g.len()];
                    for i in 0..m {
                        for j in 0..n {
                            ga[j * m + i] = g[i * n + j];
                        }
                    }
                    add_into(acc(&mut grads, *a, g.len()), &ga);
                }
                Op::Element { x, r, c } => {
                    let src = &nodes[*x].value;
                    let n = src.cols();
                    let len = src.len();
                    acc(&mut grads, *x, len)[r * n + c] += g[0];
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let params = self
            .params
            .borrow()
            .iter()
            .map(|(&id, &node)| (id, node))
            .collect();
        Ok(Grads {
            grads,
            shapes,
            params,
            param_version: self.param_version.get(),
        })
    }

    /// Backward plus accumulation of `scale * dL/dparam` into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore, scale: f64) -> Result<Grads> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(store, scale)?;
        Ok(grads)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
