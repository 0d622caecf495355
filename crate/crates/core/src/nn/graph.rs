//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Graph`]; nodes are created in
//! topological order, so the backward pass is a single reverse sweep.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
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
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    NormalizeRows(Var, Vec<f64>),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GroupMax(Var, Vec<usize>),
    Reshape(Var),
    SumAll(Var),
    /// Scalar output with a precomputed local gradient w.r.t. the input.
    Scalar(Var, Tensor),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation record. Parameters are bound once per graph via
/// [`Graph::bind_params`] and looked up by id with [`Graph::param`].
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

impl Graph {
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
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that accumulates a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Creates one variable per parameter tensor and makes them available
    /// through [`Graph::param`].
    pub fn bind_params(&mut self, tensors: &[Tensor]) {
        self.params = tensors.iter().map(|t| self.variable(t.clone())).collect();
    }

    /// Uses existing variables as the parameter set.
    pub fn use_params(&mut self, vars: Vec<Var>) {
        self.params = vars;
    }

    pub fn param(&self, id: usize) -> Var {
        self.params[id]
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(shape_err("matmul_nt", sa, sb));
        }
        let v = self.value(a).matmul_nt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMulNt(a, b), rg))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor {
            rows: sa.0,
            cols: sa.1,
            data,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    fn row_broadcast(&self, x: Var, r: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (sx, sr) = (self.shape(x), self.shape(r));
        if sr.0 != 1 || sr.1 != sx.1 {
            return Err(shape_err(name, sx, sr));
        }
        let (tx, tr) = (self.value(x), self.value(r));
        let mut out = tx.clone();
        for row in out.data.chunks_exact_mut(sx.1) {
            for (o, b) in row.iter_mut().zip(&tr.data) {
                *o = f(*o, *b);
            }
        }
        Ok(out)
    }

    /// `x + b` with `b` a `1×c` row broadcast over every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let v = self.row_broadcast(x, b, "add_row", |p, q| p + q)?;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(v, Op::AddRow(x, b), rg))
    }

    /// `x ⊙ g` with `g` a `1×c` row broadcast over every row of `x`.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let v = self.row_broadcast(x, g, "mul_row", |p, q| p * q)?;
        let rg = self.rg(x) || self.rg(g);
        Ok(self.push(v, Op::MulRow(x, g), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|e| *e *= s);
        let rg = self.rg(x);
        self.push(v, Op::Scale(x, s), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|e| *e = gelu(*e));
        let rg = self.rg(x);
        self.push(v, Op::Gelu(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        let cols = v.cols;
        if cols > 0 {
            for row in v.data.chunks_exact_mut(cols) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for e in row.iter_mut() {
                    *e = (*e - m).exp();
                    s += *e;
                }
                for e in row.iter_mut() {
                    *e /= s;
                }
            }
        }
        let rg = self.rg(x);
        self.push(v, Op::SoftmaxRows(x), rg)
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let mut v = self.value(x).clone();
        let cols = v.cols;
        let mut inv = Vec::with_capacity(v.rows);
        if cols > 0 {
            for row in v.data.chunks_exact_mut(cols) {
                let mean = row.iter().sum::<f64>() / cols as f64;
                let var = row.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / cols as f64;
                let is = 1.0 / (var + eps).sqrt();
                for e in row.iter_mut() {
                    *e = (*e - mean) * is;
                }
                inv.push(is);
            }
        }
        let rg = self.rg(x);
        self.push(v, Op::NormalizeRows(x, inv), rg)
    }

    /// Row gather: `out[r] = x[idx[r]]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows) {
            return Err(Error::InvalidInput(format!(
                "gather index {bad} out of range for {} rows",
                t.rows
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor {
            rows: idx.len(),
            cols: t.cols,
            data,
        };
        let rg = self.rg(x);
        Ok(self.push(v, Op::Gather(x, idx.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(p) => self.shape(*p).0,
            None => return Err(Error::Empty("concat of zero tensors".into())),
        };
        if let Some(p) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(shape_err("concat_cols", (rows, 0), self.shape(*p)));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor { rows, cols, data }, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if start > end || end > t.cols {
            return Err(Error::InvalidInput(format!(
                "column slice {start}..{end} of {} columns",
                t.cols
            )));
        }
        let mut data = Vec::with_capacity(t.rows * (end - start));
        for r in 0..t.rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let v = Tensor {
            rows: t.rows,
            cols: end - start,
            data,
        };
        let rg = self.rg(x);
        Ok(self.push(v, Op::SliceCols(x, start), rg))
    }

    /// Column-wise max over consecutive groups of `k` rows.
    /// Ties resolve to the first row of the group.
    pub fn group_max(&mut self, x: Var, k: usize) -> Result<Var> {
        let t = self.value(x);
        if k == 0 || !t.rows.is_multiple_of(k) {
            return Err(Error::InvalidInput(format!(
                "group size {k} does not divide {} rows",
                t.rows
            )));
        }
        let groups = t.rows / k;
        let cols = t.cols;
        let mut data = vec![f64::NEG_INFINITY; groups * cols];
        let mut arg = vec![0usize; groups * cols];
        for g in 0..groups {
            for r in g * k..(g + 1) * k {
                let row = t.row(r);
                for c in 0..cols {
                    if row[c] > data[g * cols + c] || r == g * k {
                        data[g * cols + c] = row[c];
                        arg[g * cols + c] = r;
                    }
                }
            }
        }
        let v = Tensor {
            rows: groups,
            cols,
            data,
        };
        let rg = self.rg(x);
        Ok(self.push(v, Op::GroupMax(x, arg), rg))
    }

    /// Column-wise max over all rows, giving `1×c`.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let k = self.shape(x).0;
        self.group_max(x, k)
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(x);
        if rows * cols != t.len() {
            return Err(shape_err("reshape", t.shape(), (rows, cols)));
        }
        let v = Tensor {
            rows,
            cols,
            data: t.data.clone(),
        };
        let rg = self.rg(x);
        Ok(self.push(v, Op::Reshape(x), rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Scalar node whose gradient w.r.t. `x` is the supplied `local_grad`.
    pub fn custom_scalar(&mut self, x: Var, value: f64, local_grad: Tensor) -> Result<Var> {
        if local_grad.shape() != self.shape(x) {
            return Err(shape_err("custom_scalar", self.shape(x), local_grad.shape()));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(value), Op::Scalar(x, local_grad), rg))
    }

    /// Reverse sweep from the scalar `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.shape(out);
        if shape != (1, 1) {
            return Err(Error::DimensionMismatch(format!(
                "backward needs a scalar output, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gi) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &gi, &mut grads);
            grads[i] = Some(gi);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn acc_with(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("slot initialized"));
    }

    fn propagate(&self, op: &Op, y: &Tensor, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, gy.matmul_nt(self.value(*b)));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, self.value(*a).matmul_tn(gy));
                }
            }
            Op::MatMulNt(a, b) => {
                if self.rg(*a) {
                    self.acc(grads, *a, gy.matmul(self.value(*b)));
                }
                if self.rg(*b) {
                    self.acc(grads, *b, gy.matmul_tn(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.clone());
                self.acc(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gy.clone());
                let mut n = gy.clone();
                n.data.iter_mut().for_each(|e| *e = -*e);
                self.acc(grads, *b, n);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = gy.data.iter().zip(&tb.data).map(|(g, x)| g * x).collect();
                    self.acc(grads, *a, Tensor { data: d, ..gy.clone() });
                }
                if self.rg(*b) {
                    let d = gy.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                    self.acc(grads, *b, Tensor { data: d, ..gy.clone() });
                }
            }
            Op::AddRow(x, b) => {
                self.acc(grads, *x, gy.clone());
                self.acc_with(grads, *b, |gb| {
                    for row in gy.data.chunks_exact(gy.cols.max(1)) {
                        for (o, g) in gb.data.iter_mut().zip(row) {
                            *o += g;
                        }
                    }
                });
            }
            Op::MulRow(x, r) => {
                let (tx, tr) = (self.value(*x), self.value(*r));
                if self.rg(*x) {
                    let mut gx = gy.clone();
                    for row in gx.data.chunks_exact_mut(gy.cols.max(1)) {
                        for (o, s) in row.iter_mut().zip(&tr.data) {
                            *o *= s;
                        }
                    }
                    self.acc(grads, *x, gx);
                }
                self.acc_with(grads, *r, |gr| {
                    let c = gy.cols.max(1);
                    for (grow, xrow) in gy.data.chunks_exact(c).zip(tx.data.chunks_exact(c)) {
                        for ((o, g), xv) in gr.data.iter_mut().zip(grow).zip(xrow) {
                            *o += g * xv;
                        }
                    }
                });
            }
            Op::Scale(x, s) => {
                let mut g = gy.clone();
                g.data.iter_mut().for_each(|e| *e *= s);
                self.acc(grads, *x, g);
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let d = gy
                    .data
                    .iter()
                    .zip(&tx.data)
                    .map(|(g, xv)| g * gelu_grad(*xv))
                    .collect();
                self.acc(grads, *x, Tensor { data: d, ..gy.clone() });
            }
            Op::SoftmaxRows(x) => {
                let mut g = gy.clone();
                let c = y.cols.max(1);
                for (grow, yrow) in g.data.chunks_exact_mut(c).zip(y.data.chunks_exact(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (o, yv) in grow.iter_mut().zip(yrow) {
                        *o = yv * (*o - dot);
                    }
                }
                self.acc(grads, *x, g);
            }
            Op::NormalizeRows(x, inv) => {
                let mut g = gy.clone();
                let c = y.cols.max(1);
                let n = y.cols as f64;
                for ((grow, yrow), is) in g.data.chunks_exact_mut(c).zip(y.data.chunks_exact(c)).zip(inv) {
                    let mg = grow.iter().sum::<f64>() / n;
                    let mgy = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (o, yv) in grow.iter_mut().zip(yrow) {
                        *o = is * (*o - mg - yv * mgy);
                    }
                }
                self.acc(grads, *x, g);
            }
            Op::Gather(x, idx) => {
                self.acc_with(grads, *x, |gx| {
                    let c = gy.cols;
                    for (r, &src) in idx.iter().enumerate() {
                        let from = &gy.data[r * c..(r + 1) * c];
                        for (o, g) in gx.data[src * c..(src + 1) * c].iter_mut().zip(from) {
                            *o += g;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = self.shape(*p);
                    if self.rg(*p) {
                        let mut data = Vec::with_capacity(r * c);
                        for row in 0..r {
                            data.extend_from_slice(&gy.row(row)[offset..offset + c]);
                        }
                        self.acc(grads, *p, Tensor { rows: r, cols: c, data });
                    }
                    offset += c;
                }
            }
            Op::SliceCols(x, start) => {
                self.acc_with(grads, *x, |gx| {
                    let c = gx.cols;
                    for r in 0..gy.rows {
                        for (j, g) in gy.row(r).iter().enumerate() {
                            gx.data[r * c + start + j] += g;
                        }
                    }
                });
            }
            Op::GroupMax(x, arg) => {
                self.acc_with(grads, *x, |gx| {
                    let c = gy.cols;
                    for (e, (&src, g)) in arg.iter().zip(&gy.data).enumerate() {
                        gx.data[src * c + e % c] += g;
                    }
                });
            }
            Op::Reshape(x) => {
                let (r, c) = self.shape(*x);
                self.acc(
                    grads,
                    *x,
                    Tensor {
                        rows: r,
                        cols: c,
                        data: gy.data.clone(),
                    },
                );
            }
            Op::SumAll(x) => {
                let (r, c) = self.shape(*x);
                self.acc(grads, *x, Tensor::filled(r, c, gy.item()));
            }
            Op::Scalar(x, local) => {
                let s = gy.item();
                let mut g = local.clone();
                g.data.iter_mut().for_each(|e| *e *= s);
                self.acc(grads, *x, g);
            }
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zero-filled when `v` does not influence the output.
    pub fn get_or_zeros(&self, g: &Graph, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = g.shape(v);
            Tensor::zeros(r, c)
        })
    }

    /// Gradients of the bound parameters, in parameter-id order.
    pub fn param_grads(&self, g: &Graph) -> Vec<Tensor> {
        g.param_vars().iter().map(|v| self.get_or_zeros(g, *v)).collect()
    }
}
