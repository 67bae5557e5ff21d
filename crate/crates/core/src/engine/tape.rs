//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Each recorded node keeps
//! its value; [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products into every node that depends on a trainable
//! parameter.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul, matmul_at, matmul_bt};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{argument, dimension, Error, Result};
use crate::math;

/// Smallest argument passed to `ln` by [`Tape::log`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Relu(Var),
    Tanh(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Max(Var, usize),
    SoftmaxCrossEntropy { logits: Var, probs: Vec<f64>, targets: Vec<f64> },
    BinaryCrossEntropy { logits: Var, targets: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Shift(..) => "shift",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Max(..) => "max",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BinaryCrossEntropy { .. } => "binary_cross_entropy",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to trainable parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn contains(&self, id: ParamId) -> bool {
        self.by_param.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.by_param.insert(id, grad);
    }

    /// Multiply every gradient by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for g in self.by_param.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    /// `self += factor * other`, adding entries missing from `self`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        for (id, g) in other.iter() {
            match self.by_param.get_mut(&id) {
                Some(mine) => {
                    if !mine.same_shape(g) {
                        return Err(dimension(format!("gradient shape mismatch for {id:?}")));
                    }
                    for (a, b) in mine.data_mut().iter_mut().zip(g.data()) {
                        *a += factor * b;
                    }
                }
                None => {
                    let mut t = g.clone();
                    for v in t.data_mut() {
                        *v *= factor;
                    }
                    self.by_param.insert(id, t);
                }
            }
        }
        Ok(())
    }

    /// Largest absolute gradient entry.
    pub fn max_abs(&self) -> f64 {
        self.by_param
            .values()
            .flat_map(|t| t.data().iter())
            .fold(0.0f64, |m, v| m.max(math::abs(*v)))
    }
}

/// A recording of one forward evaluation.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape { store, nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite { node: id, op: op.name() });
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(id))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record an input or any other value that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant, false)
    }

    /// Record a parameter; it is differentiated unless it is frozen.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        let p = self.store.get(id);
        let rg = !p.frozen;
        self.push(p.value.clone(), Op::Param(id), rg)
    }

    /// Record a parameter as a constant for this pass.
    pub fn param_detached(&mut self, id: ParamId) -> Result<Var> {
        self.push(self.store.value(id).clone(), Op::Param(id), false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(dimension(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let out = Tensor::matrix(m, n, matmul(ta.data(), tb.data(), m, k, n))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// Add a row vector `b` (length `cols`) to every row of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let c = ta.cols();
        if tb.len() != c {
            return Err(dimension(format!("bias of length {} for {} columns", tb.len(), c)));
        }
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::AddBias(a, b), rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(dimension(format!(
                "{} of shapes {:?} and {:?}",
                op.name(),
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map(a, |x| x * factor, Op::Scale(a, factor))
    }

    /// Add a constant to every entry.
    pub fn shift(&mut self, a: Var, offset: f64) -> Result<Var> {
        self.map(a, |x| x + offset, Op::Shift(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, math::tanh, Op::Tanh(a))
    }

    /// Natural log with its argument clamped at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| math::ln(x.max(LOG_FLOOR)), Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, math::exp, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Maximum over all entries; the gradient flows to the first maximizer.
    pub fn max(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (idx, best) = t
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let rg = self.rg(a);
        self.push(Tensor::scalar(best), Op::Max(a, idx), rg)
    }

    /// Mean over rows of `-Σ_c q_c log softmax(logits)_c`, with `targets`
    /// holding one distribution `q` per row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 2 || !t.same_shape(targets) {
            return Err(dimension(format!(
                "logits {:?} vs targets {:?}",
                t.shape(),
                targets.shape()
            )));
        }
        let (n, c) = (t.rows(), t.cols());
        let mut probs = vec![0.0; n * c];
        let mut total = 0.0;
        for i in 0..n {
            let row = t.row(i);
            let q = targets.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + math::ln(row.iter().map(|v| math::exp(v - max)).sum::<f64>());
            for j in 0..c {
                let log_p = row[j] - lse;
                probs[i * c + j] = math::exp(log_p);
                total -= q[j] * log_p;
            }
        }
        let rg = self.rg(logits);
        let op = Op::SoftmaxCrossEntropy { logits, probs, targets: targets.data().to_vec() };
        self.push(Tensor::scalar(total / n as f64), op, rg)
    }

    /// Mean binary cross-entropy of sigmoid(logits) against 0/1 (or soft) targets.
    pub fn binary_cross_entropy(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != targets.len() {
            return Err(dimension(format!(
                "{} logits vs {} binary targets",
                t.len(),
                targets.len()
            )));
        }
        let n = targets.len() as f64;
        let total: f64 = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&s, &y)| math::softplus(s) - y * s)
            .sum();
        let rg = self.rg(logits);
        let op = Op::BinaryCrossEntropy { logits, targets: targets.to_vec() };
        self.push(Tensor::scalar(total / n), op, rg)
    }

    /// Gradients of the scalar `loss` with respect to every trainable
    /// parameter reachable from it. Frozen and detached parameters are absent.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(argument(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let t = Tensor::new(node.value.shape().to_vec(), g)?;
                    match out.by_param.get_mut(id) {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                                *a += b;
                            }
                        }
                        None => {
                            out.by_param.insert(*id, t);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, matmul_bt(&g, tb.data(), m, k, n));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, matmul_at(ta.data(), &g, m, k, n));
                    }
                }
                Op::AddBias(a, b) => {
                    if self.rg(*b) {
                        let c = self.value(*b).len();
                        let mut gb = vec![0.0; c];
                        for row in g.chunks(c) {
                            for (o, v) in gb.iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.iter().map(|v| -v).collect());
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let ga = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| v * factor).collect());
                }
                Op::Shift(a) => accumulate(&mut grads, *a, g),
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let ga = g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let x = self.value(*a).data();
                    let ga = g
                        .iter()
                        .zip(x)
                        .map(|(gv, xv)| if *xv > LOG_FLOOR { gv / xv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    let ga = g.iter().zip(y).map(|(gv, yv)| gv * yv).collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0] / n as f64; n]);
                }
                Op::Max(a, i) => {
                    let mut ga = vec![0.0; self.value(*a).len()];
                    ga[*i] = g[0];
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxCrossEntropy { logits, probs, targets } => {
                    let t = self.value(*logits);
                    let (n, c) = (t.rows(), t.cols());
                    let scale = g[0] / n as f64;
                    let mut gl = vec![0.0; n * c];
                    for i in 0..n {
                        let q = &targets[i * c..(i + 1) * c];
                        let mass: f64 = q.iter().sum();
                        for j in 0..c {
                            gl[i * c + j] = scale * (probs[i * c + j] * mass - q[j]);
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
                Op::BinaryCrossEntropy { logits, targets } => {
                    let s = self.value(*logits).data();
                    let scale = g[0] / targets.len() as f64;
                    let gl = s.iter().zip(targets).map(|(sv, y)| scale * (math::sigmoid(*sv) - y)).collect();
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(&contribution) {
                *a += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_of_three() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0), false);
        let mut tape = Tape::new(&store);
        let xv = tape.param(x).unwrap();
        let y = tape.mul(xv, xv).unwrap();
        assert_eq!(tape.value(y).item(), 9.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn uniform_logits_cross_entropy_gradient() {
        let mut store = ParamStore::new();
        let l = store.add("logits", Tensor::matrix(1, 4, vec![0.0; 4]).unwrap(), false);
        let targets = Tensor::matrix(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut tape = Tape::new(&store);
        let lv = tape.param(l).unwrap();
        let loss = tape.softmax_cross_entropy(lv, &targets).unwrap();
        assert!((tape.value(loss).item() - core::f64::consts::LN_2 * 2.0).abs() < 1e-12);
        let g = tape.backward(loss).unwrap();
        let expected = [-0.75, 0.25, 0.25, 0.25];
        for (a, b) in g.get(l).unwrap().data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_params_get_no_entry() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0), true);
        let x = store.add("x", Tensor::scalar(5.0), false);
        let mut tape = Tape::new(&store);
        let (wv, xv) = (tape.param(w).unwrap(), tape.param(x).unwrap());
        let y = tape.mul(wv, xv).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(!g.contains(w));
        assert_eq!(g.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn non_finite_reports_node() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(800.0), false);
        let mut tape = Tape::new(&store);
        let xv = tape.param(x).unwrap();
        let err = tape.exp(xv).unwrap_err();
        assert_eq!(err, Error::NonFinite { node: 1, op: "exp" });
    }

    #[test]
    fn matmul_shape_mismatch() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn log_is_clamped() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(0.0), false);
        let mut tape = Tape::new(&store);
        let xv = tape.param(x).unwrap();
        let y = tape.log(xv).unwrap();
        assert!((tape.value(y).item() - LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn max_routes_to_argmax() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::new(vec![3], vec![1.0, 4.0, 2.0]).unwrap(), false);
        let mut tape = Tape::new(&store);
        let xv = tape.param(x).unwrap();
        let m = tape.max(xv).unwrap();
        assert_eq!(tape.value(m).item(), 4.0);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
