//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward rule. Node indices are assigned in execution order,
//! so walking the tape backwards is a valid reverse topological order and each
//! node is visited exactly once.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul_at_acc, matmul_bt_acc, matmul_into, Real, Tensor};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Transpose(Var),
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    KlDiv {
        p: Var,
        q: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single computation record. Not shared across threads.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Result of [`Tape::backward`]: one gradient per recorded value that
/// depends on a parameter.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(&self.shapes[v.0], g.clone()).expect("gradient shape"))
    }

    /// Gradient of `v`, or zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn require_rank<T: Real>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::domain(
            op,
            alloc::format!("expected rank {rank}, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Copy of `v` with gradient flow cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_rank("matmul", ta, 2)?;
        require_rank("matmul", tb, 2)?;
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// Adds a length-`d` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        require_rank("add_row", tb, 1)?;
        let d = tb.numel();
        if tx.rank() == 0 || tx.last_dim() != d {
            return Err(Error::dim("add_row", tx.shape(), tb.shape()));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            for (v, &bv) in row.iter_mut().zip(tb.data()) {
                *v = *v + bv;
            }
        }
        let t = Tensor::new(tx.shape(), data)?;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(t, Op::AddRow(x, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let tx = self.value(x);
        let t = Tensor::new(tx.shape(), tx.data().iter().map(|&v| v * c).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let t = Tensor::new(
            tx.shape(),
            tx.data()
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
        )
        .expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    /// Softmax along the last axis, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.numel() == 0 || tx.last_dim() == 0 {
            return Err(Error::domain("softmax", "empty input"));
        }
        let d = tx.last_dim();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            softmax_in_place(row);
        }
        let t = Tensor::new(tx.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax(x), rg))
    }

    /// Normalizes each row of `x` to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.last_dim();
        if tx.rank() == 0 || d == 0 {
            return Err(Error::domain("layer_norm", "feature dimension is zero"));
        }
        if !(eps > T::zero()) {
            return Err(Error::domain("layer_norm", "eps must be positive"));
        }
        if tg.shape() != [d] || tb.shape() != [d] {
            return Err(Error::dim("layer_norm", tx.shape(), tg.shape()));
        }
        let n = T::of(d as f64);
        let rows = tx.rows();
        let mut xhat = Vec::with_capacity(tx.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.numel());
        for row in tx.data().chunks(d) {
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for ((&v, &g), &b) in row.iter().zip(tg.data()).zip(tb.data()) {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g + b);
            }
        }
        let t = Tensor::new(tx.shape(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &v| a + v);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.numel() == 0 {
            return Err(Error::domain("mean", "empty input"));
        }
        let n = T::of(tx.numel() as f64);
        let s = tx.data().iter().fold(T::zero(), |a, &v| a + v) / n;
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Stacks inputs along the first axis. All inputs must share their
    /// trailing dimension.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::domain("concat_rows", "no inputs"))?;
        let d = self.value(*first).last_dim();
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in xs {
            let t = self.value(v);
            if t.rank() != 2 || t.last_dim() != d {
                return Err(Error::dim("concat_rows", self.value(*first).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(Tensor::new(&[rows, d], data)?, Op::ConcatRows(xs.to_vec()), rg))
    }

    /// Joins 2-D inputs side by side along the last axis.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::domain("concat_cols", "no inputs"))?;
        let rows = self.value(*first).rows();
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let t = self.value(v);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::dim("concat_cols", self.value(*first).shape(), t.shape()));
            }
            widths.push(t.last_dim());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &v in xs {
                data.extend_from_slice(self.value(v).row(r));
            }
        }
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(&[rows, total], data)?,
            Op::ConcatCols(xs.to_vec()),
            rg,
        ))
    }

    /// Rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        require_rank("slice_rows", tx, 2)?;
        if start >= end || end > tx.rows() {
            return Err(Error::dim("slice_rows", tx.shape(), &[start, end]));
        }
        let d = tx.last_dim();
        let t = Tensor::new(&[end - start, d], tx.data()[start * d..end * d].to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SliceRows { x, start }, rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        require_rank("slice_cols", tx, 2)?;
        if start >= end || end > tx.last_dim() {
            return Err(Error::dim("slice_cols", tx.shape(), &[start, end]));
        }
        let rows = tx.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&tx.row(r)[start..end]);
        }
        let t = Tensor::new(&[rows, end - start], data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SliceCols { x, start }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        require_rank("transpose", tx, 2)?;
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let src = tx.data();
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[n, m], data)?, Op::Transpose(x), rg))
    }

    /// Selects rows of a 2-D tensor; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        require_rank("gather_rows", tx, 2)?;
        let d = tx.last_dim();
        let mut data = Vec::with_capacity(index.len() * d);
        for &i in index {
            if i >= tx.rows() {
                return Err(Error::dim("gather_rows", tx.shape(), &[i]));
            }
            data.extend_from_slice(tx.row(i));
        }
        let t = Tensor::new(&[index.len(), d], data)?;
        let rg = self.rg(x);
        Ok(self.push(
            t,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// `Σ p_j (ln p_j − ln q_j)` for probability vectors `p` and `q`.
    pub fn kl_div(&mut self, p: Var, q: Var) -> Result<Var> {
        let (tp, tq) = (self.value(p), self.value(q));
        require_rank("kl_div", tp, 1)?;
        if tp.shape() != tq.shape() {
            return Err(Error::dim("kl_div", tp.shape(), tq.shape()));
        }
        let tol = 1e-6 + tp.numel() as f64 * T::epsilon().as_f64() * 4.0;
        for (name, t) in [("p", tp), ("q", tq)] {
            if !t.is_finite() {
                return Err(Error::NonFinite {
                    what: alloc::format!("kl_div {name}"),
                });
            }
            let s: f64 = t.data().iter().map(|v| v.as_f64()).sum();
            if (s - 1.0).abs() > tol || t.data().iter().any(|v| !(*v >= T::zero())) {
                return Err(Error::domain(
                    "kl_div",
                    alloc::format!("{name} is not a probability vector (sum {s})"),
                ));
            }
        }
        let floor = T::of(PROB_FLOOR);
        let mut acc = T::zero();
        for (&pv, &qv) in tp.data().iter().zip(tq.data()) {
            acc = acc + pv * (pv.max(floor).ln() - qv.max(floor).ln());
        }
        let rg = self.rg(p) || self.rg(q);
        Ok(self.push(Tensor::scalar(acc), Op::KlDiv { p, q }, rg))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales
    /// the survivors.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::domain("dropout", "rate must lie in [0, 1)"));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let tx = self.value(x);
        let mask: Vec<T> = (0..tx.numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(tx.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Dropout { x, mask }, rg))
    }

    /// Reverse pass from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_t = self.value(root);
        if root_t.numel() != 1 {
            return Err(Error::domain("backward", "root must hold a single element"));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(vec![T::one()]);

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &mut |s| matmul_bt_acc(g, tb.data(), s, m, n, k));
                acc(*b, &mut |s| matmul_at_acc(ta.data(), g, s, m, k, n));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| {
                    for (sv, &gv) in s.iter_mut().zip(g) {
                        *sv = *sv - gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |s| {
                    for ((sv, &gv), &bv) in s.iter_mut().zip(g).zip(tb.data()) {
                        *sv = *sv + gv * bv;
                    }
                });
                acc(*b, &mut |s| {
                    for ((sv, &gv), &av) in s.iter_mut().zip(g).zip(ta.data()) {
                        *sv = *sv + gv * av;
                    }
                });
            }
            Op::AddRow(x, b) => {
                let d = self.value(*b).numel();
                acc(*x, &mut |s| add_into(s, g));
                acc(*b, &mut |s| {
                    for row in g.chunks(d) {
                        add_into(s, row);
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |s| {
                for (sv, &gv) in s.iter_mut().zip(g) {
                    *sv = *sv + gv * *c;
                }
            }),
            Op::Relu(x) => {
                let tx = self.value(*x);
                acc(*x, &mut |s| {
                    for ((sv, &gv), &xv) in s.iter_mut().zip(g).zip(tx.data()) {
                        if xv > T::zero() {
                            *sv = *sv + gv;
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let d = y.last_dim();
                acc(*x, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(d).zip(g.chunks(d)).zip(y.data().chunks(d)) {
                        let dot = grow.iter().zip(yrow).fold(T::zero(), |a, (&gv, &yv)| a + gv * yv);
                        for ((sv, &gv), &yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *sv = *sv + yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let tg = self.value(*gain);
                let d = tg.numel();
                let n = T::of(d as f64);
                acc(*x, &mut |s| {
                    for (r, ((srow, grow), hrow)) in
                        s.chunks_mut(d).zip(g.chunks(d)).zip(xhat.chunks(d)).enumerate()
                    {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for ((&gv, &gn), &h) in grow.iter().zip(tg.data()).zip(hrow) {
                            let dh = gv * gn;
                            m1 = m1 + dh;
                            m2 = m2 + dh * h;
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        for (((sv, &gv), &gn), &h) in srow.iter_mut().zip(grow).zip(tg.data()).zip(hrow) {
                            *sv = *sv + rstd[r] * (gv * gn - m1 - h * m2);
                        }
                    }
                });
                acc(*gain, &mut |s| {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for ((sv, &gv), &h) in s.iter_mut().zip(grow).zip(hrow) {
                            *sv = *sv + gv * h;
                        }
                    }
                });
                acc(*bias, &mut |s| {
                    for grow in g.chunks(d) {
                        add_into(s, grow);
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |s| {
                for sv in s.iter_mut() {
                    *sv = *sv + g[0];
                }
            }),
            Op::Mean(x) => {
                let n = T::of(self.value(*x).numel() as f64);
                acc(*x, &mut |s| {
                    for sv in s.iter_mut() {
                        *sv = *sv + g[0] / n;
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &v in xs {
                    let len = self.value(v).numel();
                    acc(v, &mut |s| add_into(s, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(xs) => {
                let total = node.value.last_dim();
                let mut col = 0;
                for &v in xs {
                    let w = self.value(v).last_dim();
                    acc(v, &mut |s| {
                        for (srow, grow) in s.chunks_mut(w).zip(g.chunks(total)) {
                            add_into(srow, &grow[col..col + w]);
                        }
                    });
                    col += w;
                }
            }
            Op::SliceRows { x, start } => {
                let d = node.value.last_dim();
                acc(*x, &mut |s| add_into(&mut s[start * d..start * d + g.len()], g));
            }
            Op::SliceCols { x, start } => {
                let w = node.value.last_dim();
                let d = self.value(*x).last_dim();
                acc(*x, &mut |s| {
                    for (srow, grow) in s.chunks_mut(d).zip(g.chunks(w)) {
                        add_into(&mut srow[*start..*start + w], grow);
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = {
                    let sh = self.value(*x).shape();
                    (sh[0], sh[1])
                };
                acc(*x, &mut |s| {
                    for i in 0..m {
                        for j in 0..n {
                            s[i * n + j] = s[i * n + j] + g[j * m + i];
                        }
                    }
                });
            }
            Op::GatherRows { x, index } => {
                let d = node.value.last_dim();
                acc(*x, &mut |s| {
                    for (grow, &i) in g.chunks(d).zip(index) {
                        add_into(&mut s[i * d..(i + 1) * d], grow);
                    }
                });
            }
            Op::KlDiv { p, q } => {
                let (tp, tq) = (self.value(*p), self.value(*q));
                let floor = T::of(PROB_FLOOR);
                acc(*p, &mut |s| {
                    for ((sv, &pv), &qv) in s.iter_mut().zip(tp.data()).zip(tq.data()) {
                        let mut d = pv.max(floor).ln() - qv.max(floor).ln();
                        if pv > floor {
                            d = d + T::one();
                        }
                        *sv = *sv + g[0] * d;
                    }
                });
                acc(*q, &mut |s| {
                    for ((sv, &pv), &qv) in s.iter_mut().zip(tp.data()).zip(tq.data()) {
                        if qv > floor {
                            *sv = *sv - g[0] * pv / qv;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => acc(*x, &mut |s| {
                for ((sv, &gv), &m) in s.iter_mut().zip(g).zip(mask) {
                    *sv = *sv + gv * m;
                }
            }),
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Softmax of a plain slice, outside any tape.
pub fn softmax_vec<T: Real>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::domain("softmax", "empty input"));
    }
    let mut out = values.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}
