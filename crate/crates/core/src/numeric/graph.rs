//! Per-forward-pass computation graph with reverse-mode gradients.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Nodes are append-only, so the node order is already a topological order
//! and `backward` is a single reverse sweep. Parameters enter the graph as
//! leaves tagged with their [`ParamId`]; using the same parameter twice
//! simply creates two leaves whose gradients are summed when applied to the
//! [`ParamStore`].

use super::params::{ParamId, ParamStore};
use super::rng::RngStream;
use super::tensor::Tensor;
use super::NumericError;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias(Var, Var),
    AddScalar(Var, Var),
    ScalarMul(Var, Var),
    Affine(Var, f64),
    Concat(Var, Var),
    Stack(Vec<Var>),
    Sum(Var),
    MeanAxis(Var, usize),
    Softmax(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Conv1d(Var, Var),
    Dropout(Var, Vec<f64>),
    Roll(Var, usize),
    Index(Var, usize),
    Column(Var, usize),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

type Res = Result<Var, NumericError>;

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Res {
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Res {
        self.push("constant", value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Res {
        self.constant(Tensor::scalar(value))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let out = matmul_raw(ta, tb, false, false);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Res {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Res {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Res {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a[r, c] + bias[c]` for every row `r`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.rank() != 2 || tb.rank() != 1 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("add_row_bias", ta, tb));
        }
        let cols = ta.shape()[1];
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data()[i % cols])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add_row_bias", out, Op::AddRowBias(a, bias))
    }

    /// Adds a single-element tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Res {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.len() != 1 {
            return Err(mismatch("add_scalar", ta, ts));
        }
        let out = ta.map(|x| x + ts.item());
        self.push("add_scalar", out, Op::AddScalar(a, s))
    }

    /// Multiplies every entry of `a` by a single-element tensor.
    pub fn scalar_mul(&mut self, a: Var, s: Var) -> Res {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.len() != 1 {
            return Err(mismatch("scalar_mul", ta, ts));
        }
        let out = ta.map(|x| x * ts.item());
        self.push("scalar_mul", out, Op::ScalarMul(a, s))
    }

    /// `a * mul + add` with constant coefficients.
    pub fn affine(&mut self, a: Var, mul: f64, add: f64) -> Res {
        let out = self.value(a).map(|x| x * mul + add);
        self.push("affine", out, Op::Affine(a, mul))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Res {
        self.affine(a, factor, 0.0)
    }

    /// Concatenation along the last axis. Leading extents must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ra, rb) = (ta.rank(), tb.rank());
        if ra != rb || ra == 0 || ta.shape()[..ra - 1] != tb.shape()[..rb - 1] {
            return Err(mismatch("concat", ta, tb));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let outer = ta.len() / ca.max(1);
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for r in 0..outer {
            data.extend_from_slice(&ta.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&tb.data()[r * cb..(r + 1) * cb]);
        }
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let out = Tensor::new(shape, data)?;
        self.push("concat", out, Op::Concat(a, b))
    }

    /// Stacks single-element tensors into a vector.
    pub fn stack(&mut self, items: &[Var]) -> Res {
        let mut data = Vec::with_capacity(items.len());
        for &v in items {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(mismatch("stack", t, &Tensor::scalar(0.0)));
            }
            data.push(t.item());
        }
        self.push("stack", Tensor::vector(data), Op::Stack(items.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Res {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of a rank-2 tensor over `axis` (0 or 1).
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Res {
        let ta = self.value(a);
        if ta.rank() != 2 || axis > 1 {
            return Err(NumericError::InvalidArgument(format!(
                "mean_axis({axis}) on shape {:?}",
                ta.shape()
            )));
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let out = if axis == 0 {
            let mut v = vec![0.0; c];
            for i in 0..r {
                for (j, acc) in v.iter_mut().enumerate() {
                    *acc += ta.at(i, j);
                }
            }
            Tensor::vector(v.into_iter().map(|x| x / r as f64).collect())
        } else {
            Tensor::vector((0..r).map(|i| ta.row(i).iter().sum::<f64>() / c as f64).collect())
        };
        self.push("mean_axis", out, Op::MeanAxis(a, axis))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Res {
        let ta = self.value(a);
        let c = ta.cols();
        if c == 0 {
            return Err(NumericError::InvalidArgument("softmax over empty axis".into()));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("softmax", out, Op::Softmax(a))
    }

    pub fn tanh(&mut self, a: Var) -> Res {
        let out = self.value(a).map(f64::tanh);
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Res {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Res {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push("relu", out, Op::Relu(a))
    }

    /// Temporal convolution with "same" zero padding.
    ///
    /// `x` is `[L, C]`, `w` is `[K, C, O]` with odd `K`; output is `[L, O]`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Res {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.rank() != 2 || tw.rank() != 3 || tw.shape()[1] != tx.shape()[1] || tw.shape()[0] % 2 == 0 {
            return Err(mismatch("conv1d", tx, tw));
        }
        let out = conv1d_raw(tx, tw);
        self.push("conv1d", out, Op::Conv1d(x, w))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is zero.
    pub fn dropout(&mut self, a: Var, rate: f64, rng: &mut RngStream, training: bool) -> Res {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericError::InvalidArgument(format!("dropout rate {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        let ta = self.value(a);
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("dropout", out, Op::Dropout(a, mask))
    }

    /// Forward cyclic shift along axis 0: row `t` of the output is row
    /// `(t - shift) mod L` of the input.
    pub fn roll(&mut self, a: Var, shift: usize) -> Res {
        let ta = self.value(a);
        let l = ta.shape().first().copied().unwrap_or(0);
        if shift >= l {
            return Err(NumericError::InvalidArgument(format!(
                "roll shift {shift} out of range for length {l}"
            )));
        }
        let out = roll_raw(ta, shift);
        self.push("roll", out, Op::Roll(a, shift))
    }

    /// Element `i` of a vector as a single-element tensor.
    pub fn index(&mut self, a: Var, i: usize) -> Res {
        let ta = self.value(a);
        if ta.rank() != 1 || i >= ta.len() {
            return Err(NumericError::InvalidArgument(format!(
                "index {i} into shape {:?}",
                ta.shape()
            )));
        }
        let out = Tensor::scalar(ta.data()[i]);
        self.push("index", out, Op::Index(a, i))
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(&mut self, a: Var, j: usize) -> Res {
        let ta = self.value(a);
        if ta.rank() != 2 || j >= ta.shape()[1] {
            return Err(NumericError::InvalidArgument(format!(
                "column {j} of shape {:?}",
                ta.shape()
            )));
        }
        let out = Tensor::vector((0..ta.shape()[0]).map(|r| ta.at(r, j)).collect());
        self.push("column", out, Op::Column(a, j))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Res {
        let out = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", out, Op::Reshape(a))
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, pred: Var, target: Var) -> Res {
        let n = self.value(pred).len() as f64;
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        let s = self.sum(sq)?;
        self.scale(s, 1.0 / n)
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NumericError::NonScalarLoss {
                shape: lt.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(*a, matmul_raw(&g, tb, false, true));
                    acc(*b, matmul_raw(ta, &g, true, false));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    acc(*a, elementwise(&g, tb, |x, y| x * y));
                    acc(*b, elementwise(&g, ta, |x, y| x * y));
                }
                Op::AddRowBias(a, b) => {
                    let cols = g.shape()[1];
                    let mut gb = vec![0.0; cols];
                    for (k, x) in g.data().iter().enumerate() {
                        gb[k % cols] += x;
                    }
                    acc(*a, g);
                    acc(*b, Tensor::vector(gb));
                }
                Op::AddScalar(a, s) => {
                    let total: f64 = g.data().iter().sum();
                    acc(*s, Tensor::new(self.value(*s).shape().to_vec(), vec![total])?);
                    acc(*a, g);
                }
                Op::ScalarMul(a, s) => {
                    let sv = self.value(*s);
                    let ta = self.value(*a);
                    let gs: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    acc(*s, Tensor::new(sv.shape().to_vec(), vec![gs])?);
                    acc(*a, g.map(|x| x * sv.item()));
                }
                Op::Affine(a, mul) => acc(*a, g.map(|x| x * mul)),
                Op::Concat(a, b) => {
                    let (sa, sb) = (self.value(*a).shape().to_vec(), self.value(*b).shape().to_vec());
                    let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
                    let outer = g.len() / (ca + cb).max(1);
                    let mut ga = Vec::with_capacity(outer * ca);
                    let mut gb = Vec::with_capacity(outer * cb);
                    for row in g.data().chunks(ca + cb) {
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    acc(*a, Tensor::new(sa, ga)?);
                    acc(*b, Tensor::new(sb, gb)?);
                }
                Op::Stack(items) => {
                    for (k, v) in items.iter().enumerate() {
                        let shape = self.value(*v).shape().to_vec();
                        acc(*v, Tensor::new(shape, vec![g.data()[k]])?);
                    }
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    acc(*a, Tensor::filled(&shape, g.item()));
                }
                Op::MeanAxis(a, axis) => {
                    let ta = self.value(*a);
                    let (r, c) = (ta.shape()[0], ta.shape()[1]);
                    let mut ga = Tensor::zeros(&[r, c]);
                    for i in 0..r {
                        for j in 0..c {
                            ga.data_mut()[i * c + j] = if *axis == 0 {
                                g.data()[j] / r as f64
                            } else {
                                g.data()[i] / c as f64
                            };
                        }
                    }
                    acc(*a, ga);
                }
                Op::Softmax(a) => {
                    let c = y.cols();
                    let mut ga = Vec::with_capacity(y.len());
                    for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        ga.extend(yr.iter().zip(gr).map(|(p, q)| p * (q - dot)));
                    }
                    acc(*a, Tensor::new(y.shape().to_vec(), ga)?);
                }
                Op::Tanh(a) => acc(*a, elementwise(&g, y, |gi, yi| gi * (1.0 - yi * yi))),
                Op::Sigmoid(a) => acc(*a, elementwise(&g, y, |gi, yi| gi * yi * (1.0 - yi))),
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    acc(*a, elementwise(&g, ta, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
                }
                Op::Conv1d(x, w) => {
                    let (gx, gw) = conv1d_backward(self.value(*x), self.value(*w), &g);
                    acc(*x, gx);
                    acc(*w, gw);
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                    acc(*a, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Roll(a, shift) => {
                    let l = g.shape()[0];
                    acc(*a, roll_raw(&g, (l - shift) % l));
                }
                Op::Index(a, k) => {
                    let mut ga = Tensor::zeros(self.value(*a).shape());
                    ga.data_mut()[*k] = g.item();
                    acc(*a, ga);
                }
                Op::Column(a, j) => {
                    let shape = self.value(*a).shape().to_vec();
                    let mut ga = Tensor::zeros(&shape);
                    for r in 0..shape[0] {
                        ga.data_mut()[r * shape[1] + j] = g.data()[r];
                    }
                    acc(*a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    acc(*a, g.reshaped(&shape)?);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn param_nodes(&self) -> impl Iterator<Item = (usize, ParamId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(id) => Some((i, id)),
            _ => None,
        })
    }
}

/// Gradients of a loss with respect to every node of a [`Graph`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds `scale ×` each parameter leaf's gradient into the store's slots.
    pub fn accumulate(&self, graph: &Graph, store: &mut ParamStore, scale: f64) {
        for (node, id) in graph.param_nodes() {
            if let Some(g) = &self.grads[node] {
                let slot = store.grad_mut(id);
                for (s, x) in slot.data_mut().iter_mut().zip(g.data()) {
                    *s += scale * x;
                }
            }
        }
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

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// `op(a) · op(b)` where `op` optionally transposes a rank-2 tensor.
fn matmul_raw(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let n = if tb { br } else { bc };
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = if ta { ad[p * ac + i] } else { ad[i * ac + p] };
            if av == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * bd[j * bc + p];
                }
            } else {
                for (o, bv) in row.iter_mut().zip(&bd[p * bc..(p + 1) * bc]) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

fn conv1d_raw(x: &Tensor, w: &Tensor) -> Tensor {
    let (l, c) = (x.shape()[0], x.shape()[1]);
    let (k, o) = (w.shape()[0], w.shape()[2]);
    let pad = k / 2;
    let mut out = vec![0.0; l * o];
    for t in 0..l {
        let orow = &mut out[t * o..(t + 1) * o];
        for kk in 0..k {
            let Some(s) = (t + kk).checked_sub(pad).filter(|&s| s < l) else { continue };
            for ch in 0..c {
                let xv = x.data()[s * c + ch];
                let wrow = &w.data()[(kk * c + ch) * o..(kk * c + ch + 1) * o];
                for (ov, wv) in orow.iter_mut().zip(wrow) {
                    *ov += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![l, o], out).expect("conv shape")
}

fn conv1d_backward(x: &Tensor, w: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (l, c) = (x.shape()[0], x.shape()[1]);
    let (k, o) = (w.shape()[0], w.shape()[2]);
    let pad = k / 2;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    for t in 0..l {
        let grow = &g.data()[t * o..(t + 1) * o];
        for kk in 0..k {
            let Some(s) = (t + kk).checked_sub(pad).filter(|&s| s < l) else { continue };
            for ch in 0..c {
                let base = (kk * c + ch) * o;
                let wrow = &w.data()[base..base + o];
                let xv = x.data()[s * c + ch];
                let mut dx = 0.0;
                for (j, gv) in grow.iter().enumerate() {
                    dx += gv * wrow[j];
                    gw.data_mut()[base + j] += gv * xv;
                }
                gx.data_mut()[s * c + ch] += dx;
            }
        }
    }
    (gx, gw)
}

fn roll_raw(a: &Tensor, shift: usize) -> Tensor {
    let l = a.shape()[0];
    let width = a.len() / l.max(1);
    let mut data = vec![0.0; a.len()];
    for t in 0..l {
        let src = (t + l - shift) % l;
        data[t * width..(t + 1) * width].copy_from_slice(&a.data()[src * width..(src + 1) * width]);
    }
    Tensor::new(a.shape().to_vec(), data).expect("roll shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(g: &mut Graph, data: &[f64]) -> Var {
        g.constant(Tensor::vector(data.to_vec())).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = v(&mut g, &[0.0, 0.0, 0.0]);
        let y = g.softmax(x).unwrap();
        for &p in g.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_and_sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.scalar(0.0).unwrap();
        let t = g.tanh(x).unwrap();
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(t).item(), 0.0);
        assert_eq!(g.value(s).item(), 0.5);
    }

    #[test]
    fn conv1d_same_padding_preserves_length() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[7, 5], 1.0)).unwrap();
        let w = g.constant(Tensor::filled(&[3, 5, 4], 0.1)).unwrap();
        let y = g.conv1d(x, w).unwrap();
        assert_eq!(g.value(y).shape(), &[7, 4]);
        // interior rows see all three taps, the edges only two
        assert!((g.value(y).at(3, 0) - 1.5).abs() < 1e-12);
        assert!((g.value(y).at(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
        let c = g.constant(Tensor::zeros(&[3])).unwrap();
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![3.0]));
        let mut g = Graph::new();
        let wv = g.param(&store, w);
        let sq = g.mul(wv, wv).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap().accumulate(&g, &mut store, 1.0);
        assert_eq!(store.grad(w).data(), &[6.0]);
    }

    #[test]
    fn unused_param_has_zero_gradient_and_reuse_accumulates() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let unused = store.add("unused", Tensor::scalar(5.0));
        let mut g = Graph::new();
        let x1 = g.param(&store, a);
        let x2 = g.param(&store, a);
        let loss = g.add(x1, x2).unwrap();
        g.backward(loss).unwrap().accumulate(&g, &mut store, 1.0);
        assert_eq!(store.grad(a).item(), 2.0);
        assert_eq!(store.grad(unused).item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = v(&mut g, &[1.0, 2.0]);
        assert!(matches!(g.backward(x), Err(NumericError::NonScalarLoss { .. })));
    }

    #[test]
    fn roll_direction_and_inverse() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1.0], [2.0], [3.0]])).unwrap();
        let y = g.roll(x, 1).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 1.0, 2.0]);
        let z = g.roll(y, 2).unwrap();
        assert_eq!(g.value(z).data(), &[1.0, 2.0, 3.0]);
        assert!(g.roll(x, 3).is_err());
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut g = Graph::new();
        let x = g.scalar(f64::MAX).unwrap();
        assert!(matches!(g.affine(x, 10.0, 0.0), Err(NumericError::NonFinite { .. })));
    }

    #[test]
    fn dropout_eval_is_identity_and_train_rescales() {
        let mut g = Graph::new();
        let mut rng = RngStream::new(1);
        let x = g.constant(Tensor::filled(&[1000], 1.0)).unwrap();
        let same = g.dropout(x, 0.1, &mut rng, false).unwrap();
        assert_eq!(same, x);
        let y = g.dropout(x, 0.1, &mut rng, true).unwrap();
        for &val in g.value(y).data() {
            assert!(val == 0.0 || (val - 1.0 / 0.9).abs() < 1e-15);
        }
        let mean: f64 = g.value(y).data().iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.1);
    }
}
