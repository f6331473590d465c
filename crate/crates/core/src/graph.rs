//! Eager reverse-mode autodiff over an append-only node arena.
//!
//! Backward passes are recorded as ordinary graph nodes, so a gradient can
//! itself be differentiated. The gradient penalty relies on this: it builds
//! `d score / d input`, takes its norm, and differentiates that again with
//! respect to the critic's parameters.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{numel, Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Powf(Var, f64),
    Tanh(Var),
    /// `x * (src > 0 ? pos : neg)`; `src` is treated as piecewise constant.
    Gate { x: Var, src: Var, pos: f64, neg: f64 },
    Broadcast(Var),
    SumTo(Var),
    Reshape(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Conv { x: Var, w: Var, geom: ConvGeom },
    ConvT { g: Var, w: Var, geom: ConvGeom },
    ConvW { x: Var, g: Var, geom: ConvGeom },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Pad { x: Var, axis: usize, start: usize },
    PermuteRows { x: Var, perm: Vec<usize> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Scale(a, _) | Offset(a) | Exp(a) | Ln(a) | Sqrt(a) | Powf(a, _) | Tanh(a)
            | Broadcast(a) | SumTo(a) | Reshape(a) | Transpose(a) => vec![*a],
            Gate { x, .. } => vec![*x],
            Conv { x, w, .. } => vec![*x, *w],
            ConvT { g, w, .. } => vec![*g, *w],
            ConvW { x, g, .. } => vec![*x, *g],
            Concat { parts, .. } => parts.clone(),
            Slice { x, .. } | Pad { x, .. } | PermuteRows { x, .. } => vec![*x],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Node arena holding every intermediate value of one computation.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &str, a: &[usize], b: &[usize]) {
    assert_eq!(a, b, "{op}: operand shapes differ");
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf (parameters, gradient-penalty interpolates).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(T::from_f64(v)))
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copy of the value, cut from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(T, T) -> T) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("elementwise", va.shape(), vb.shape());
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::from_vec(va.shape(), data).expect("shape");
        self.push(t, op)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(T) -> T) -> Var {
        let t = self.value(a).map(f);
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.broadcast_pair(a, b);
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.broadcast_pair(a, b);
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.broadcast_pair(a, b);
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.broadcast_pair(a, b);
        self.zip(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = T::from_f64(c);
        self.unary(a, Op::Scale(a, c), |x| x * k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let k = T::from_f64(c);
        self.unary(a, Op::Offset(a), |x| x + k)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.sqrt())
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let e = T::from_f64(p);
        self.unary(a, Op::Powf(a, p), |x| x.powf(e))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    fn gate(&mut self, x: Var, src: Var, pos: f64, neg: f64) -> Var {
        let (p, n) = (T::from_f64(pos), T::from_f64(neg));
        let (vx, vs) = (self.value(x), self.value(src));
        same_shape("gate", vx.shape(), vs.shape());
        let data = vx
            .data()
            .iter()
            .zip(vs.data())
            .map(|(&a, &s)| if s > T::zero() { a * p } else { a * n })
            .collect();
        let t = Tensor::from_vec(vx.shape(), data).expect("shape");
        self.push(t, Op::Gate { x, src, pos, neg })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.gate(a, a, 1.0, slope)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.gate(a, a, 1.0, 0.0)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.gate(a, a, 1.0, -1.0)
    }

    /// Same-rank broadcast; axes of `a` must be 1 or match `shape`.
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Var {
        let src = self.shape(a).to_vec();
        if src == shape {
            return a;
        }
        assert_eq!(src.len(), shape.len(), "broadcast rank mismatch {src:?} -> {shape:?}");
        for (s, d) in src.iter().zip(shape) {
            assert!(*s == 1 || s == d, "cannot broadcast {src:?} to {shape:?}");
        }
        let data = kernels::broadcast_to(self.value(a).data(), &src, shape);
        let t = Tensor::from_vec(shape, data).expect("shape");
        self.push(t, Op::Broadcast(a))
    }

    /// Sums over the axes where `shape` is 1 (same rank as `a`).
    pub fn sum_to(&mut self, a: Var, shape: &[usize]) -> Var {
        let src = self.shape(a).to_vec();
        if src == shape {
            return a;
        }
        assert_eq!(src.len(), shape.len(), "sum_to rank mismatch {src:?} -> {shape:?}");
        let data = kernels::sum_to(self.value(a).data(), &src, shape);
        let t = Tensor::from_vec(shape, data).expect("shape");
        self.push(t, Op::SumTo(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        if self.shape(a) == shape {
            return a;
        }
        let t = self.value(a).clone().reshape(shape).expect("reshape");
        self.push(t, Op::Reshape(a))
    }

    /// Sum of all elements, shaped `[1]`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let ones = vec![1; self.shape(a).len()];
        let s = self.sum_to(a, &ones);
        self.reshape(s, &[1])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = numel(self.shape(a));
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row mean over all trailing axes, shaped `[B]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let mut target = vec![1; shape.len()];
        target[0] = shape[0];
        let per_row = numel(&shape[1..]);
        let s = self.sum_to(a, &target);
        let s = self.reshape(s, &[shape[0]]);
        self.scale(s, 1.0 / per_row as f64)
    }

    fn broadcast_pair(&mut self, a: Var, b: Var) -> (Var, Var) {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            return (a, b);
        }
        if numel(&sa) == 1 && sa.len() != sb.len() {
            let r = self.reshape(a, &vec![1; sb.len()]);
            return (self.broadcast_to(r, &sb), b);
        }
        if numel(&sb) == 1 && sa.len() != sb.len() {
            let r = self.reshape(b, &vec![1; sa.len()]);
            return (a, self.broadcast_to(r, &sa));
        }
        assert_eq!(sa.len(), sb.len(), "binary op rank mismatch {sa:?} vs {sb:?}");
        let out: Vec<usize> = sa.iter().zip(&sb).map(|(x, y)| *x.max(y)).collect();
        (self.broadcast_to(a, &out), self.broadcast_to(b, &out))
    }

    /// `[m,k] @ [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul {sa:?} @ {sb:?}");
        let data = kernels::matmul(self.value(a).data(), sa[0], sa[1], self.value(b).data(), sb[1]);
        let t = Tensor::from_vec(&[sa[0], sb[1]], data).expect("shape");
        self.push(t, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let s = self.shape(a).to_vec();
        assert_eq!(s.len(), 2, "transpose expects a matrix");
        let data = kernels::transpose2d(self.value(a).data(), s[0], s[1]);
        let t = Tensor::from_vec(&[s[1], s[0]], data).expect("shape");
        self.push(t, Op::Transpose(a))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(Error::Shape(alloc::format!("conv2d input {sx:?} weight {sw:?}")));
        }
        if kernels::conv_out_dim(sx[2], sw[2], geom).is_none()
            || kernels::conv_out_dim(sx[3], sw[3], geom).is_none()
        {
            return Err(Error::Shape(alloc::format!("conv2d kernel larger than input {sx:?}")));
        }
        let (data, shape) = kernels::conv2d(self.value(x).data(), &sx, self.value(w).data(), &sw, geom);
        let t = Tensor::from_vec(&shape, data)?;
        Ok(self.push(t, Op::Conv { x, w, geom }))
    }

    /// Transposed convolution producing an `out_hw` map. `w` keeps the
    /// forward-conv layout `[C_in_of_g, C_out, k, k]`.
    pub fn conv_transpose2d(&mut self, g: Var, w: Var, geom: ConvGeom, out_hw: (usize, usize)) -> Result<Var> {
        let (sg, sw) = (self.shape(g).to_vec(), self.shape(w).to_vec());
        if sg.len() != 4 || sw.len() != 4 || sg[1] != sw[0] {
            return Err(Error::Shape(alloc::format!("conv_transpose2d input {sg:?} weight {sw:?}")));
        }
        if kernels::conv_out_dim(out_hw.0, sw[2], geom) != Some(sg[2])
            || kernels::conv_out_dim(out_hw.1, sw[3], geom) != Some(sg[3])
        {
            return Err(Error::Shape(alloc::format!(
                "conv_transpose2d output {out_hw:?} inconsistent with input {sg:?}"
            )));
        }
        let data = kernels::conv2d_transpose(self.value(g).data(), &sg, self.value(w).data(), &sw, geom, out_hw);
        let t = Tensor::from_vec(&[sg[0], sw[1], out_hw.0, out_hw.1], data)?;
        Ok(self.push(t, Op::ConvT { g, w, geom }))
    }

    fn conv_weight_grad(&mut self, x: Var, g: Var, geom: ConvGeom, kernel: (usize, usize)) -> Var {
        let (sx, sg) = (self.shape(x).to_vec(), self.shape(g).to_vec());
        let data = kernels::conv2d_weight_grad(self.value(x).data(), &sx, self.value(g).data(), &sg, kernel, geom);
        let t = Tensor::from_vec(&[sg[1], sx[1], kernel.0, kernel.1], data).expect("shape");
        self.push(t, Op::ConvW { x, g, geom })
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let first = self.shape(parts[0]).to_vec();
        let mut shape = first.clone();
        shape[axis] = 0;
        for p in parts {
            let s = self.shape(*p);
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            for (ax, (a, b)) in s.iter().zip(&first).enumerate() {
                assert!(ax == axis || a == b, "concat shape mismatch");
            }
            shape[axis] += s[axis];
        }
        let views: Vec<(&[T], &[usize])> =
            parts.iter().map(|p| (self.value(*p).data(), self.value(*p).shape())).collect();
        let data = kernels::concat_axis(&views, axis);
        let t = Tensor::from_vec(&shape, data).expect("shape");
        self.push(t, Op::Concat { parts: parts.to_vec(), axis })
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let mut shape = self.shape(x).to_vec();
        assert!(start + len <= shape[axis], "slice out of range");
        let data = kernels::slice_axis(self.value(x).data(), &shape, axis, start, len);
        shape[axis] = len;
        let t = Tensor::from_vec(&shape, data).expect("shape");
        self.push(t, Op::Slice { x, axis, start })
    }

    fn pad(&mut self, x: Var, axis: usize, start: usize, total: usize) -> Var {
        let mut shape = self.shape(x).to_vec();
        let data = kernels::pad_axis(self.value(x).data(), &shape, axis, start, total);
        shape[axis] = total;
        let t = Tensor::from_vec(&shape, data).expect("shape");
        self.push(t, Op::Pad { x, axis, start })
    }

    /// `out[i] = x[perm[i]]` along the leading axis; `perm` must be a permutation.
    pub fn permute_rows(&mut self, x: Var, perm: &[usize]) -> Var {
        let shape = self.shape(x).to_vec();
        assert_eq!(perm.len(), shape[0]);
        let data = kernels::permute_rows(self.value(x).data(), shape[0], perm);
        let t = Tensor::from_vec(&shape, data).expect("shape");
        self.push(t, Op::PermuteRows { x, perm: perm.to_vec() })
    }

    /// Vector-Jacobian products of `output` with respect to `wrt`, recorded
    /// as new graph nodes. `seed` defaults to ones (scalar outputs).
    ///
    /// Entries are `None` when `output` does not depend on that input.
    pub fn grad_with_seed(&mut self, output: Var, seed: Option<Var>, wrt: &[Var]) -> Vec<Option<Var>> {
        let end = output.0 + 1;
        let mut reach = vec![false; end];
        for w in wrt {
            if w.0 < end {
                reach[w.0] = true;
            }
        }
        let lo = wrt.iter().map(|w| w.0).min().unwrap_or(end);
        for i in lo..end {
            if !reach[i] && self.nodes[i].requires_grad {
                reach[i] = self.nodes[i].op.inputs().iter().any(|v| reach[v.0]);
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; end];
        if !reach[output.0] {
            return wrt.iter().map(|_| None).collect();
        }
        grads[output.0] = Some(match seed {
            Some(s) => s,
            None => {
                let ones = Tensor::ones(self.shape(output));
                self.constant(ones)
            }
        });
        for i in (lo..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !reach[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let y = Var(i);
            for (input, contrib) in self.vjp(&op, y, g, &reach) {
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, contrib),
                    None => contrib,
                });
            }
        }
        wrt.iter().map(|w| if w.0 < end { grads[w.0] } else { None }).collect()
    }

    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        self.grad_with_seed(output, None, wrt)
    }

    fn vjp(&mut self, op: &Op, y: Var, g: Var, reach: &[bool]) -> Vec<(Var, Var)> {
        let need = |v: &Var| reach[v.0];
        let mut out = Vec::new();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if need(a) {
                    out.push((*a, g));
                }
                if need(b) {
                    out.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    out.push((*a, g));
                }
                if need(b) {
                    let n = self.neg(g);
                    out.push((*b, n));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    let d = self.mul(g, *b);
                    out.push((*a, d));
                }
                if need(b) {
                    let d = self.mul(g, *a);
                    out.push((*b, d));
                }
            }
            Op::Div(a, b) => {
                if need(a) {
                    let d = self.div(g, *b);
                    out.push((*a, d));
                }
                if need(b) {
                    let gy = self.mul(g, y);
                    let q = self.div(gy, *b);
                    let d = self.neg(q);
                    out.push((*b, d));
                }
            }
            Op::Scale(a, c) => {
                if need(a) {
                    let d = self.scale(g, *c);
                    out.push((*a, d));
                }
            }
            Op::Offset(a) => {
                if need(a) {
                    out.push((*a, g));
                }
            }
            Op::Exp(a) => {
                if need(a) {
                    let d = self.mul(g, y);
                    out.push((*a, d));
                }
            }
            Op::Ln(a) => {
                if need(a) {
                    let d = self.div(g, *a);
                    out.push((*a, d));
                }
            }
            Op::Sqrt(a) => {
                if need(a) {
                    let two_y = self.scale(y, 2.0);
                    let d = self.div(g, two_y);
                    out.push((*a, d));
                }
            }
            Op::Powf(a, p) => {
                if need(a) {
                    let pm = self.powf(*a, p - 1.0);
                    let s = self.scale(pm, *p);
                    let d = self.mul(g, s);
                    out.push((*a, d));
                }
            }
            Op::Tanh(a) => {
                if need(a) {
                    let y2 = self.mul(y, y);
                    let neg = self.scale(y2, -1.0);
                    let one_minus = self.offset(neg, 1.0);
                    let d = self.mul(g, one_minus);
                    out.push((*a, d));
                }
            }
            Op::Gate { x, src, pos, neg } => {
                if need(x) {
                    let d = self.gate(g, *src, *pos, *neg);
                    out.push((*x, d));
                }
            }
            Op::Broadcast(a) => {
                if need(a) {
                    let s = self.shape(*a).to_vec();
                    let d = self.sum_to(g, &s);
                    out.push((*a, d));
                }
            }
            Op::SumTo(a) => {
                if need(a) {
                    let s = self.shape(*a).to_vec();
                    let d = self.broadcast_to(g, &s);
                    out.push((*a, d));
                }
            }
            Op::Reshape(a) => {
                if need(a) {
                    let s = self.shape(*a).to_vec();
                    let d = self.reshape(g, &s);
                    out.push((*a, d));
                }
            }
            Op::MatMul(a, b) => {
                if need(a) {
                    let bt = self.transpose(*b);
                    let d = self.matmul(g, bt);
                    out.push((*a, d));
                }
                if need(b) {
                    let at = self.transpose(*a);
                    let d = self.matmul(at, g);
                    out.push((*b, d));
                }
            }
            Op::Transpose(a) => {
                if need(a) {
                    let d = self.transpose(g);
                    out.push((*a, d));
                }
            }
            Op::Conv { x, w, geom } => {
                if need(x) {
                    let s = self.shape(*x).to_vec();
                    let d = self.conv_transpose2d(g, *w, *geom, (s[2], s[3])).expect("conv vjp");
                    out.push((*x, d));
                }
                if need(w) {
                    let k = (self.shape(*w)[2], self.shape(*w)[3]);
                    let d = self.conv_weight_grad(*x, g, *geom, k);
                    out.push((*w, d));
                }
            }
            Op::ConvT { g: g0, w, geom } => {
                if need(g0) {
                    let d = self.conv2d(g, *w, *geom).expect("conv_transpose vjp");
                    out.push((*g0, d));
                }
                if need(w) {
                    let k = (self.shape(*w)[2], self.shape(*w)[3]);
                    let d = self.conv_weight_grad(g, *g0, *geom, k);
                    out.push((*w, d));
                }
            }
            Op::ConvW { x, g: g0, geom } => {
                if need(x) {
                    let s = self.shape(*x).to_vec();
                    let d = self.conv_transpose2d(*g0, g, *geom, (s[2], s[3])).expect("conv_weight vjp");
                    out.push((*x, d));
                }
                if need(g0) {
                    let d = self.conv2d(*x, g, *geom).expect("conv_weight vjp");
                    out.push((*g0, d));
                }
            }
            Op::Concat { parts, axis } => {
                let mut start = 0;
                for p in parts {
                    let len = self.shape(*p)[*axis];
                    if need(p) {
                        let d = self.slice(g, *axis, start, len);
                        out.push((*p, d));
                    }
                    start += len;
                }
            }
            Op::Slice { x, axis, start } => {
                if need(x) {
                    let total = self.shape(*x)[*axis];
                    let d = self.pad(g, *axis, *start, total);
                    out.push((*x, d));
                }
            }
            Op::Pad { x, axis, start } => {
                if need(x) {
                    let len = self.shape(*x)[*axis];
                    let d = self.slice(g, *axis, *start, len);
                    out.push((*x, d));
                }
            }
            Op::PermuteRows { x, perm } => {
                if need(x) {
                    let mut inv = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    let d = self.permute_rows(g, &inv);
                    out.push((*x, d));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    /// Central differences of a scalar function of one tensor.
    fn numeric_grad(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn elementwise_chain_gradient() {
        let x0 = t(&[2, 3], &[0.3, -0.7, 1.2, 0.5, -0.1, 0.9]);
        let f = |x: &Tensor<f64>| -> (Graph<f64>, Var, Var) {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let a = g.tanh(xv);
            let b = g.exp(a);
            let c = g.mul(b, xv);
            let sq = g.square(xv);
            let d = g.offset(sq, 1.0);
            let e = g.sqrt(d);
            let r = g.div(c, e);
            let l = g.leaky_relu(r, 0.2);
            let p = g.powf(d, -0.5);
            let q = g.add(l, p);
            let s = g.mean_all(q);
            (g, xv, s)
        };
        let (mut g, xv, s) = f(&x0);
        let gx = g.grad(s, &[xv])[0].unwrap();
        let num = numeric_grad(&x0, |x| {
            let (g, _, s) = f(x);
            g.value(s).item()
        });
        assert_close(g.value(gx).data(), &num, 1e-7);
    }

    #[test]
    fn conv_and_deconv_gradients() {
        let xs = [2, 2, 5, 5];
        let x0 = Tensor::from_fn(&xs, |i| ((i * 37 % 11) as f64 - 5.0) / 7.0);
        let w0 = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 13 % 7) as f64 - 3.0) / 5.0);
        let wt0 = Tensor::from_fn(&[3, 2, 4, 4], |i| ((i * 5 % 9) as f64 - 4.0) / 6.0);
        let build = |x: &Tensor<f64>, w: &Tensor<f64>, wt: &Tensor<f64>| {
            let mut g = Graph::new();
            let (xv, wv, wtv) = (g.leaf(x.clone()), g.leaf(w.clone()), g.leaf(wt.clone()));
            let y = g.conv2d(xv, wv, ConvGeom { stride: 1, pad: 1 }).unwrap();
            let y = g.tanh(y);
            let z = g.conv_transpose2d(y, wtv, ConvGeom { stride: 2, pad: 1 }, (10, 10)).unwrap();
            let z2 = g.square(z);
            let s = g.mean_all(z2);
            (g, [xv, wv, wtv], s)
        };
        let (mut g, vars, s) = build(&x0, &w0, &wt0);
        let grads = g.grad(s, &vars);
        let nx = numeric_grad(&x0, |x| {
            let (g, _, s) = build(x, &w0, &wt0);
            g.value(s).item()
        });
        let nw = numeric_grad(&w0, |w| {
            let (g, _, s) = build(&x0, w, &wt0);
            g.value(s).item()
        });
        let nwt = numeric_grad(&wt0, |wt| {
            let (g, _, s) = build(&x0, &w0, wt);
            g.value(s).item()
        });
        assert_close(g.value(grads[0].unwrap()).data(), &nx, 1e-6);
        assert_close(g.value(grads[1].unwrap()).data(), &nw, 1e-6);
        assert_close(g.value(grads[2].unwrap()).data(), &nwt, 1e-6);
    }

    #[test]
    fn second_order_through_conv() {
        // h(w) = || d/dx sum(tanh(conv(x, w))) ||^2; check dh/dw numerically.
        let x0 = Tensor::from_fn(&[1, 2, 4, 4], |i| ((i * 7 % 5) as f64 - 2.0) / 3.0);
        let w0 = Tensor::from_fn(&[2, 2, 3, 3], |i| ((i * 11 % 13) as f64 - 6.0) / 10.0);
        let build = |w: &Tensor<f64>| {
            let mut g = Graph::new();
            let xv = g.leaf(x0.clone());
            let wv = g.leaf(w.clone());
            let y = g.conv2d(xv, wv, ConvGeom { stride: 1, pad: 1 }).unwrap();
            let y = g.tanh(y);
            let s = g.sum_all(y);
            let gx = g.grad(s, &[xv])[0].unwrap();
            let sq = g.square(gx);
            let h = g.sum_all(sq);
            (g, wv, h)
        };
        let (mut g, wv, h) = build(&w0);
        let gw = g.grad(h, &[wv])[0].unwrap();
        let num = numeric_grad(&w0, |w| {
            let (g, _, h) = build(w);
            g.value(h).item()
        });
        assert_close(g.value(gw).data(), &num, 1e-6);
    }

    #[test]
    fn structural_ops_gradients() {
        let a0 = Tensor::from_fn(&[3, 2], |i| i as f64 * 0.3 - 0.5);
        let b0 = Tensor::from_fn(&[2, 4], |i| (i as f64 * 0.17).sin());
        let build = |a: &Tensor<f64>| {
            let mut g = Graph::new();
            let av = g.leaf(a.clone());
            let bv = g.constant(b0.clone());
            let m = g.matmul(av, bv);
            let m = g.permute_rows(m, &[2, 0, 1]);
            let at = g.transpose(av);
            let at = g.reshape(at, &[3, 2]);
            let c = g.concat(&[m, at], 1);
            let s = g.slice(c, 1, 3, 2);
            let s = g.exp(s);
            let r = g.sum_to(s, &[3, 1]);
            let r = g.broadcast_to(r, &[3, 6]);
            let r = g.mul(r, c);
            let out = g.mean_all(r);
            (g, av, out)
        };
        let (mut g, av, out) = build(&a0);
        let ga = g.grad(out, &[av])[0].unwrap();
        let num = numeric_grad(&a0, |a| {
            let (g, _, s) = build(a);
            g.value(s).item()
        });
        assert_close(g.value(ga).data(), &num, 1e-7);
    }

    #[test]
    fn unrelated_input_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::scalar(2.0));
        let b = g.leaf(Tensor::scalar(3.0));
        let c = g.square(a);
        let gr = g.grad(c, &[a, b]);
        assert_eq!(g.value(gr[0].unwrap()).item(), 4.0);
        assert!(gr[1].is_none());
    }
}
