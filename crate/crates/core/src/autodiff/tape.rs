//! Reverse-mode tape.
//!
//! Every primitive appends one node holding its forward value; `backward`
//! walks the nodes in reverse insertion order, which is a valid topological
//! order because a node can only reference earlier nodes.

use std::sync::Arc;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
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
    Affine { x: Var, w: Var, b: Var },
    AddRow { x: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log { x: Var, floor: f64 },
    Square(Var),
    Reciprocal(Var),
    Softmax(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Sum { x: Var, axis: usize },
    SumAll(Var),
    Mean(Var),
    Gather { x: Var, idx: Arc<[usize]> },
    MulRows { x: Var, w: Var },
    Reshape(Var),
    RoundStraightThrough(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of tracked leaves produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a tracked leaf. `None` when the
    /// leaf is untracked or does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn unary(
    v: &Tensor,
    f: impl Fn(f64) -> f64,
) -> Tensor {
    Tensor::new(v.shape(), v.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

/// Split `shape` around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c += a * b` for row-major `a: [m,k]`, `b: [k,n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf whose gradient is not needed.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is reported by `backward`.
    pub fn tracked(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn leaf(&mut self, t: Tensor, track: bool) -> Var {
        self.push(t, Op::Leaf, track)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), (n, 1), &mut out);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `x · w + b` with the bias vector added to every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(x).dims2("affine")?;
        let (k2, n) = self.value(w).dims2("affine")?;
        if k != k2 || self.value(b).len() != n {
            return Err(Error::shape(
                "affine",
                format!("[{m}, {k}] x [{k2}, {n}] + {:?}", self.value(b).shape()),
            ));
        }
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(bias);
        }
        gemm(m, k, n, self.value(x).data(), (k, 1), self.value(w).data(), (n, 1), &mut out);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Affine { x, w, b }, rg))
    }

    /// Adds the vector `b` to every row of the matrix `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2("add_row")?;
        if self.value(b).len() != n {
            return Err(Error::shape(
                "add_row",
                format!("[{m}, {n}] + {:?}", self.value(b).shape()),
            ));
        }
        let bias = self.value(b).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(bias).map(|(a, c)| a + c))
            .collect();
        let rg = self.rg(&[x, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::AddRow { x, b }, rg))
    }

    fn binary(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = unary(self.value(x), f);
        let rg = self.rg(&[x]);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.map(x, |v| -v, Op::Neg(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    /// Natural log. Inputs below `floor` are clamped to it and pass no gradient.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Var {
        self.map(x, |v| v.max(floor).ln(), Op::Log { x, floor })
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.log_clamped(x, f64::MIN_POSITIVE)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x))
    }

    pub fn reciprocal(&mut self, x: Var) -> Var {
        self.map(x, |v| 1.0 / v, Op::Reciprocal(x))
    }

    /// Rounds at 0.5 in the forward pass; the backward pass is the identity.
    pub fn round_straight_through(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.5 { 1.0 } else { 0.0 }, Op::RoundStraightThrough(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let width = *v
            .shape()
            .last()
            .ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        if width == 0 {
            return Err(Error::shape("softmax", "empty last axis"));
        }
        let mut out = v.data().to_vec();
        for row in out.chunks_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                sum += *e;
            }
            for e in row.iter_mut() {
                *e /= sum;
            }
        }
        let t = Tensor::new(v.shape(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Softmax(x), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let len = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum", format!("axis {axis} for shape {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let data = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &data[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (acc, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Sum { x, axis }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::shape("mean", "empty input"));
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x), rg))
    }

    /// Selects rows (slices along the first axis) by index; indices may repeat.
    pub fn gather(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let v = self.value(x);
        let rows = *v
            .shape()
            .first()
            .ok_or_else(|| Error::shape("gather", "scalar input"))?;
        let width = v.len() / rows.max(1);
        let mut out = Vec::with_capacity(idx.len() * width);
        for &r in idx.iter() {
            if r >= rows {
                return Err(Error::shape("gather", format!("row {r} of {rows}")));
            }
            out.extend_from_slice(&v.data()[r * width..(r + 1) * width]);
        }
        let mut shape = v.shape().to_vec();
        shape[0] = idx.len();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Gather { x, idx }, rg))
    }

    /// Multiplies row `r` of `x` by the scalar `w[r]`.
    pub fn mul_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let v = self.value(x);
        let rows = *v
            .shape()
            .first()
            .ok_or_else(|| Error::shape("mul_rows", "scalar input"))?;
        let wv = self.value(w);
        if wv.len() != rows {
            return Err(Error::shape(
                "mul_rows",
                format!("{:?} scaled by {:?}", v.shape(), wv.shape()),
            ));
        }
        let width = v.len() / rows.max(1);
        let out: Vec<f64> = v
            .data()
            .chunks(width.max(1))
            .zip(wv.data())
            .flat_map(|(row, &s)| row.iter().map(move |e| e * s))
            .collect();
        let t = Tensor::new(v.shape(), out)?;
        let rg = self.rg(&[x, w]);
        Ok(self.push(t, Op::MulRows { x, w }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Runs backpropagation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }
        // Keep only tracked leaves.
        for (idx, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2("matmul").expect("checked");
                let n = out.len() / m.max(1);
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |da| gemm(m, n, k, g, (n, 1), bv, (1, n), da));
                acc(*b, &mut |db| gemm(k, m, n, av, (1, k), g, (n, 1), db));
            }
            Op::Affine { x, w, b } => {
                let (m, k) = self.nodes[x.0].value.dims2("affine").expect("checked");
                let n = out.len() / m.max(1);
                let (xv, wv) = (val(*x), val(*w));
                acc(*x, &mut |dx| gemm(m, n, k, g, (n, 1), wv, (1, n), dx));
                acc(*w, &mut |dw| gemm(k, m, n, xv, (1, k), g, (n, 1), dw));
                acc(*b, &mut |db| {
                    for row in g.chunks(n) {
                        for (d, r) in db.iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                });
            }
            Op::AddRow { x, b } => {
                let n = self.nodes[b.0].value.len();
                acc(*x, &mut |dx| add_into(dx, g));
                acc(*b, &mut |db| {
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for (d, gi) in d.iter_mut().zip(g) {
                        *d -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |d| {
                    for ((d, gi), y) in d.iter_mut().zip(g).zip(bv) {
                        *d += gi * y;
                    }
                });
                acc(*b, &mut |d| {
                    for ((d, gi), x) in d.iter_mut().zip(g).zip(av) {
                        *d += gi * x;
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |d| {
                for (d, gi) in d.iter_mut().zip(g) {
                    *d += gi * c;
                }
            }),
            Op::Neg(x) => acc(*x, &mut |d| {
                for (d, gi) in d.iter_mut().zip(g) {
                    *d -= gi;
                }
            }),
            Op::Relu(x) => {
                let xv = val(*x);
                acc(*x, &mut |d| {
                    for ((d, gi), xi) in d.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => acc(*x, &mut |d| {
                for ((d, gi), y) in d.iter_mut().zip(g).zip(out) {
                    *d += gi * y * (1.0 - y);
                }
            }),
            Op::Exp(x) => acc(*x, &mut |d| {
                for ((d, gi), y) in d.iter_mut().zip(g).zip(out) {
                    *d += gi * y;
                }
            }),
            Op::Log { x, floor } => {
                let xv = val(*x);
                acc(*x, &mut |d| {
                    for ((d, gi), xi) in d.iter_mut().zip(g).zip(xv) {
                        if *xi >= *floor {
                            *d += gi / xi;
                        }
                    }
                });
            }
            Op::Square(x) => {
                let xv = val(*x);
                acc(*x, &mut |d| {
                    for ((d, gi), xi) in d.iter_mut().zip(g).zip(xv) {
                        *d += 2.0 * gi * xi;
                    }
                });
            }
            Op::Reciprocal(x) => acc(*x, &mut |d| {
                for ((d, gi), y) in d.iter_mut().zip(g).zip(out) {
                    *d -= gi * y * y;
                }
            }),
            Op::Softmax(x) => {
                let width = *node.value.shape().last().expect("checked");
                acc(*x, &mut |d| {
                    for ((drow, grow), yrow) in d.chunks_mut(width).zip(g.chunks(width)).zip(out.chunks(width)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((dd, gi), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *dd += y * (gi - dot);
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.shape()[*axis];
                    acc(*p, &mut |d| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            add_into(&mut d[o * len * inner..(o + 1) * len * inner], src);
                        }
                    });
                    offset += len;
                }
            }
            Op::Sum { x, axis } => {
                let (outer, len, inner) = split_axis(self.nodes[x.0].value.shape(), *axis);
                acc(*x, &mut |d| {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            add_into(&mut d[(o * len + l) * inner..(o * len + l + 1) * inner], src);
                        }
                    }
                });
            }
            Op::SumAll(x) => acc(*x, &mut |d| {
                for e in d.iter_mut() {
                    *e += g[0];
                }
            }),
            Op::Mean(x) => acc(*x, &mut |d| {
                let s = g[0] / d.len() as f64;
                for e in d.iter_mut() {
                    *e += s;
                }
            }),
            Op::Gather { x, idx } => {
                let width = out.len() / idx.len().max(1);
                acc(*x, &mut |d| {
                    for (k, &r) in idx.iter().enumerate() {
                        add_into(&mut d[r * width..(r + 1) * width], &g[k * width..(k + 1) * width]);
                    }
                });
            }
            Op::MulRows { x, w } => {
                let (xv, wv) = (val(*x), val(*w));
                let width = xv.len() / wv.len().max(1);
                acc(*x, &mut |d| {
                    for ((drow, grow), s) in d.chunks_mut(width).zip(g.chunks(width)).zip(wv) {
                        for (dd, gi) in drow.iter_mut().zip(grow) {
                            *dd += gi * s;
                        }
                    }
                });
                acc(*w, &mut |d| {
                    for ((dw, grow), xrow) in d.iter_mut().zip(g.chunks(width)).zip(xv.chunks(width)) {
                        *dw += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
            }
            Op::Reshape(x) | Op::RoundStraightThrough(x) => acc(*x, &mut |d| add_into(d, g)),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
