use std::collections::HashMap;

use rand::Rng as _;

use super::tensor::{gemm_into, Tensor};
use super::TensorError;
use crate::rng::Rng;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Elu(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    SumRows(Var),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    BatchVecMat(Var, Var),
    StraightThrough(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
///
/// Operations panic on shape mismatches: those are programming errors, not
/// recoverable conditions.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    bound: HashMap<(u64, usize), Var>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.rows(), a.cols(), data);
    }
    let (rows, cols) = broadcast_shape(a.shape(), b.shape());
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(f(at(a, r, c), at(b, r, c)));
        }
    }
    Tensor::new(rows, cols, data)
}

#[inline]
fn at(t: &Tensor, r: usize, c: usize) -> f64 {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    t.get(rr, cc)
}

/// Sum `g` down to `shape`, undoing a broadcast.
fn reduce_to(g: Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if shape.0 == 1 { 0 } else { r };
            let cc = if shape.1 == 1 { 0 } else { c };
            let v = out.get(rr, cc) + g.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
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
        debug_assert!(
            value.data().iter().all(|v| !v.is_nan()),
            "NaN produced by {op:?}"
        );
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

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf owned by the tape itself.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to parameter `index` of the store identified by `store`.
    /// Repeated binds within one pass return the same node.
    pub(crate) fn bind_param(&mut self, store: u64, index: usize, value: &Tensor) -> Var {
        if let Some(&v) = self.bound.get(&(store, index)) {
            return v;
        }
        let v = self.leaf(value.clone());
        self.bound.insert((store, index), v);
        v
    }

    pub(crate) fn bound_params(&self, store: u64) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.bound
            .iter()
            .filter(move |((s, _), _)| *s == store)
            .map(|((_, i), v)| (*i, *v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Same value, cut from the graph.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.binary(a, b, value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_binary(self.value(a), self.value(b), |x, y| x + y);
        self.binary(a, b, value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_binary(self.value(a), self.value(b), |x, y| x - y);
        self.binary(a, b, value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_binary(self.value(a), self.value(b), |x, y| x * y);
        self.binary(a, b, value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.unary(a, value, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.unary(a, value, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.unary(a, value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.unary(a, value, Op::Tanh(a))
    }

    /// `x` for positive inputs, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.unary(a, value, Op::Elu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.unary(a, value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.unary(a, value, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.unary(a, value, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.unary(a, value, Op::Square(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.unary(a, value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = log_softmax_rows(self.value(a));
        self.unary(a, value, Op::LogSoftmaxRows(a))
    }

    /// Column vector holding `a[r, idx[r]]` for every row.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), idx.len(), "gather needs one index per row");
        let data = idx
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                assert!(i < t.cols(), "gather index {i} out of {} columns", t.cols());
                t.get(r, i)
            })
            .collect();
        let value = Tensor::new(idx.len(), 1, data);
        self.unary(a, value, Op::Gather(a, idx.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.unary(a, value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean of an empty tensor");
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        self.unary(a, value, Op::Mean(a))
    }

    /// Row sums as a column vector.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let value = Tensor::new(t.rows(), 1, data);
        self.unary(a, value, Op::SumCols(a))
    }

    /// Column sums as a row vector.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for (o, v) in value.data_mut().iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        self.unary(a, value, Op::SumRows(a))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "min needs equal shapes");
        let value = broadcast_binary(self.value(a), self.value(b), f64::min);
        self.binary(a, b, value, Op::Min(a, b))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, value, Op::Clamp(a, lo, hi))
    }

    /// `mean((a - b)^2)`.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean(sq)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.data_mut()[r * cols + offset..r * cols + offset + t.cols()]
                    .copy_from_slice(t.row_slice(r));
            }
            offset += t.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::new(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        assert!(start <= end && end <= t.cols(), "slice {start}..{end} out of {} columns", t.cols());
        let width = end - start;
        let mut data = Vec::with_capacity(t.rows() * width);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let value = Tensor::new(t.rows(), width, data);
        self.unary(a, value, Op::SliceCols(a, start))
    }

    /// Per-row vector-matrix product. Row `b` of `w` holds an `n x e` matrix
    /// in row-major order; the result row is `v[b] * W_b`.
    pub fn batch_vecmat(&mut self, v: Var, w: Var) -> Var {
        let (bv, n) = self.shape(v);
        let (bw, ne) = self.shape(w);
        assert_eq!(bv, bw, "batch_vecmat batch mismatch");
        assert!(n > 0 && ne % n == 0, "batch_vecmat width {ne} not a multiple of {n}");
        let e = ne / n;
        let (vt, wt) = (self.value(v), self.value(w));
        let mut value = Tensor::zeros(bv, e);
        for b in 0..bv {
            let vr = vt.row_slice(b);
            let wr = wt.row_slice(b);
            let out = &mut value.data_mut()[b * e..(b + 1) * e];
            for (i, &x) in vr.iter().enumerate() {
                for (o, &y) in out.iter_mut().zip(&wr[i * e..(i + 1) * e]) {
                    *o += x * y;
                }
            }
        }
        self.binary(v, w, value, Op::BatchVecMat(v, w))
    }

    /// Forward value `hard`, gradient of `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor) -> Var {
        assert_eq!(self.shape(soft), hard.shape(), "straight-through shape mismatch");
        self.unary(soft, hard, Op::StraightThrough(soft))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of earlier sweeps are
    /// discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, contribution: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot => *slot = Some(contribution),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let elementwise = |a: Var, f: &dyn Fn(f64, f64) -> f64| {
            let x = val(a);
            Tensor::new(
                x.rows(),
                x.cols(),
                x.data().iter().zip(g.data()).map(|(&x, &g)| f(x, g)).collect(),
            )
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.rg(a) {
                    send(a, g.matmul_t(val(b), false, true));
                }
                if self.rg(b) {
                    send(b, val(a).matmul_t(g, true, false));
                }
            }
            &Op::Add(a, b) => {
                send(a, reduce_to(g.clone(), val(a).shape()));
                send(b, reduce_to(g.clone(), val(b).shape()));
            }
            &Op::Sub(a, b) => {
                send(a, reduce_to(g.clone(), val(a).shape()));
                send(b, reduce_to(g.map(|x| -x), val(b).shape()));
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (val(a), val(b));
                if self.rg(a) {
                    let ga = broadcast_binary(g, tb, |g, y| g * y);
                    send(a, reduce_to(ga, ta.shape()));
                }
                if self.rg(b) {
                    let gb = broadcast_binary(g, ta, |g, x| g * x);
                    send(b, reduce_to(gb, tb.shape()));
                }
            }
            &Op::Scale(a, c) => send(a, g.map(|x| x * c)),
            &Op::AddScalar(a) | &Op::StraightThrough(a) => send(a, g.clone()),
            &Op::Relu(a) => send(a, elementwise(a, &|x, g| if x > 0.0 { g } else { 0.0 })),
            &Op::Tanh(a) => {
                let y = &node.value;
                let d = y.data().iter().zip(g.data()).map(|(y, g)| g * (1.0 - y * y)).collect();
                send(a, Tensor::new(y.rows(), y.cols(), d));
            }
            &Op::Elu(a) => send(a, elementwise(a, &|x, g| if x > 0.0 { g } else { g * x.exp() })),
            &Op::Exp(a) => {
                let y = &node.value;
                let d = y.data().iter().zip(g.data()).map(|(y, g)| g * y).collect();
                send(a, Tensor::new(y.rows(), y.cols(), d));
            }
            &Op::Log(a) => send(a, elementwise(a, &|x, g| g / x)),
            &Op::Abs(a) => send(a, elementwise(a, &|x, g| g * x.signum())),
            &Op::Square(a) => send(a, elementwise(a, &|x, g| 2.0 * x * g)),
            &Op::SoftmaxRows(a) => {
                let s = &node.value;
                let mut d = Tensor::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let (sr, gr) = (s.row_slice(r), g.row_slice(r));
                    let dot: f64 = sr.iter().zip(gr).map(|(s, g)| s * g).sum();
                    for c in 0..s.cols() {
                        d.set(r, c, sr[c] * (gr[c] - dot));
                    }
                }
                send(a, d);
            }
            &Op::LogSoftmaxRows(a) => {
                let ls = &node.value;
                let mut d = Tensor::zeros(ls.rows(), ls.cols());
                for r in 0..ls.rows() {
                    let gr = g.row_slice(r);
                    let total: f64 = gr.iter().sum();
                    for c in 0..ls.cols() {
                        d.set(r, c, gr[c] - ls.get(r, c).exp() * total);
                    }
                }
                send(a, d);
            }
            Op::Gather(a, idx) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for (r, &c) in idx.iter().enumerate() {
                    d.set(r, c, g.get(r, 0));
                }
                send(*a, d);
            }
            &Op::Sum(a) => {
                let (rows, cols) = val(a).shape();
                send(a, Tensor::full(rows, cols, g.item()));
            }
            &Op::Mean(a) => {
                let (rows, cols) = val(a).shape();
                send(a, Tensor::full(rows, cols, g.item() / (rows * cols) as f64));
            }
            &Op::SumCols(a) => {
                let (rows, cols) = val(a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    d.data_mut()[r * cols..(r + 1) * cols].fill(g.get(r, 0));
                }
                send(a, d);
            }
            &Op::SumRows(a) => {
                let (rows, cols) = val(a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    d.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(g.data());
                }
                send(a, d);
            }
            &Op::Min(a, b) => {
                let (ta, tb) = (val(a), val(b));
                let pick = |first: bool| {
                    let d = ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .zip(g.data())
                        .map(|((x, y), g)| if (x <= y) == first { *g } else { 0.0 })
                        .collect();
                    Tensor::new(ta.rows(), ta.cols(), d)
                };
                if self.rg(a) {
                    send(a, pick(true));
                }
                if self.rg(b) {
                    send(b, pick(false));
                }
            }
            &Op::Clamp(a, lo, hi) => {
                send(a, elementwise(a, &|x, g| if x >= lo && x <= hi { g } else { 0.0 }))
            }
            Op::ConcatCols(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let (rows, w) = val(p).shape();
                    if self.rg(p) {
                        let mut d = Tensor::zeros(rows, w);
                        for r in 0..rows {
                            d.data_mut()[r * w..(r + 1) * w]
                                .copy_from_slice(&g.data()[r * cols + offset..r * cols + offset + w]);
                        }
                        send(p, d);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = val(p);
                    let n = t.len();
                    if self.rg(p) {
                        send(p, Tensor::new(t.rows(), t.cols(), g.data()[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            &Op::SliceCols(a, start) => {
                let (rows, cols) = val(a).shape();
                let w = g.cols();
                let mut d = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    d.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                }
                send(a, d);
            }
            &Op::BatchVecMat(v, w) => {
                let (tv, tw) = (val(v), val(w));
                let (batch, n) = tv.shape();
                let e = g.cols();
                if self.rg(v) {
                    let mut d = Tensor::zeros(batch, n);
                    for b in 0..batch {
                        let (gr, wr) = (g.row_slice(b), tw.row_slice(b));
                        for i in 0..n {
                            let s: f64 = gr.iter().zip(&wr[i * e..(i + 1) * e]).map(|(g, w)| g * w).sum();
                            d.set(b, i, s);
                        }
                    }
                    send(v, d);
                }
                if self.rg(w) {
                    let mut d = Tensor::zeros(batch, n * e);
                    for b in 0..batch {
                        let (gr, vr) = (g.row_slice(b), tv.row_slice(b));
                        for i in 0..n {
                            for j in 0..e {
                                d.set(b, i * e + j, vr[i] * gr[j]);
                            }
                        }
                    }
                    send(w, d);
                }
            }
        }
    }

    /// Gradient-free dense layer helper: `x * w + b` written straight into a
    /// fresh tensor. Used by inference paths that skip the tape.
    pub(crate) fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(x.rows(), w.cols());
        for r in 0..x.rows() {
            out.data_mut()[r * w.cols()..(r + 1) * w.cols()].copy_from_slice(b.data());
        }
        gemm_into(x, false, w, false, &mut out, 1.0);
        out
    }
}

/// Gumbel-softmax relaxation of categorical sampling over the rows of
/// `logits`. With `hard`, the forward value is the one-hot argmax of the
/// relaxed sample while gradients follow the relaxed sample.
pub fn gumbel_softmax(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    rng: &mut Rng,
) -> Result<Var, TensorError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(TensorError::InvalidTemperature(temperature));
    }
    let (rows, cols) = tape.shape(logits);
    let noise: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect();
    let g = tape.constant(Tensor::new(rows, cols, noise));
    let perturbed = tape.add(logits, g);
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let soft = tape.softmax(scaled);
    if !hard {
        return Ok(soft);
    }
    let idx = tape.value(soft).argmax_rows();
    Ok(tape.straight_through(soft, Tensor::one_hot(&idx, cols)))
}
