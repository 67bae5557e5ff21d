//! Dense tensors, reverse-mode differentiation and first-order optimizers.

mod optim;
mod params;
mod schedule;
mod tape;
mod tensor;

pub use optim::{OptimState, Sgd};
pub use params::{Param, ParamId, ParamStore};
pub use schedule::{plateau_decay, warmup_lr};
pub use tape::{Gradients, Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{argument, dimension, Result};

/// Training objective attached to the output of a graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    SmoothedCrossEntropy { smoothing: f64 },
    BinaryCrossEntropy,
}

/// Supervision for a [`LossKind`].
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Classes(&'a [usize]),
    Binary(&'a [f64]),
}

/// Row-wise label-smoothed target distributions: `(1 - ls)·onehot(y) + ls/C`.
pub fn smoothed_targets(labels: &[usize], classes: usize, smoothing: f64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(argument(format!("label smoothing {smoothing} outside [0, 1)")));
    }
    if classes == 0 || labels.is_empty() {
        return Err(argument("smoothed targets need at least one class and one label"));
    }
    let off = smoothing / classes as f64;
    let mut data = Vec::with_capacity(labels.len() * classes);
    for &y in labels {
        if y >= classes {
            return Err(argument(format!("label {y} out of range for {classes} classes")));
        }
        for c in 0..classes {
            data.push(if c == y { 1.0 - smoothing + off } else { off });
        }
    }
    Tensor::matrix(labels.len(), classes, data)
}

impl<'a> Tape<'a> {
    /// Attach a loss to `logits`.
    pub fn loss(&mut self, logits: Var, target: Target<'_>, kind: LossKind) -> Result<Var> {
        match (kind, target) {
            (LossKind::CrossEntropy, Target::Classes(y)) => {
                let c = self.value(logits).cols();
                let q = smoothed_targets(y, c, 0.0)?;
                self.softmax_cross_entropy(logits, &q)
            }
            (LossKind::SmoothedCrossEntropy { smoothing }, Target::Classes(y)) => {
                let c = self.value(logits).cols();
                let q = smoothed_targets(y, c, smoothing)?;
                self.softmax_cross_entropy(logits, &q)
            }
            (LossKind::BinaryCrossEntropy, Target::Binary(y)) => self.binary_cross_entropy(logits, y),
            _ => Err(argument("loss kind does not match the target type")),
        }
    }
}

/// Build a graph on `batch` with `graph`, attach `kind`, and differentiate.
pub fn forward_backward<F>(
    params: &ParamStore,
    batch: &Tensor,
    target: Target<'_>,
    kind: LossKind,
    graph: F,
) -> Result<(f64, Gradients)>
where
    F: FnOnce(&mut Tape<'_>, Var) -> Result<Var>,
{
    let rows = batch.rows();
    let expected = match target {
        Target::Classes(y) => y.len(),
        Target::Binary(y) => y.len(),
    };
    if rows != expected {
        return Err(dimension(format!("batch has {rows} rows but {expected} targets")));
    }
    let mut tape = Tape::new(params);
    let x = tape.constant(batch.clone())?;
    let logits = graph(&mut tape, x)?;
    let loss = tape.loss(logits, target, kind)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), grads))
}
