use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};
use crate::error::{argument, dimension, Result};

/// Per-run optimizer state shared by all parameters of one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    /// Velocity buffers indexed by parameter id; lazily created.
    pub velocity: Vec<Option<Tensor>>,
    pub iteration: u64,
    /// Current base learning rate (after any plateau decay).
    pub lr: f64,
    pub plateau_counter: u32,
    pub best_metric: f64,
}

impl OptimState {
    pub fn new(lr: f64) -> Self {
        OptimState {
            velocity: Vec::new(),
            iteration: 0,
            lr,
            plateau_counter: 0,
            best_metric: f64::INFINITY,
        }
    }
}

/// SGD with heavy-ball momentum: `v ← μv − lr·(g + wd·θ)`, `θ ← θ + v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(argument(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay >= 0.0) {
            return Err(argument(format!("weight decay {weight_decay} must be non-negative")));
        }
        Ok(Sgd { momentum, weight_decay })
    }

    /// Apply one step to every parameter present in `grads`. Frozen
    /// parameters are skipped even if a gradient is supplied.
    pub fn step(&self, params: &mut ParamStore, grads: &Gradients, state: &mut OptimState, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(argument(format!("learning rate {lr} must be finite and non-negative")));
        }
        if state.velocity.len() < params.len() {
            state.velocity.resize(params.len(), None);
        }
        for (id, g) in grads.iter() {
            if id.0 >= params.len() {
                return Err(argument(format!("gradient for unknown parameter {id:?}")));
            }
            if params.is_frozen(id) {
                continue;
            }
            let value = params.value(id);
            if !value.same_shape(g) {
                return Err(dimension(format!(
                    "gradient {:?} vs parameter {:?} for {}",
                    g.shape(),
                    value.shape(),
                    params.get(id).name
                )));
            }
            let v = state.velocity[id.0].get_or_insert_with(|| Tensor::zeros(value.shape()));
            if !v.same_shape(g) {
                return Err(dimension(format!("velocity buffer shape mismatch for {}", params.get(id).name)));
            }
            let theta = params.value_mut(id);
            for ((t, vel), gv) in theta.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let step = if self.weight_decay > 0.0 { gv + self.weight_decay * *t } else { *gv };
                *vel = self.momentum * *vel - lr * step;
                *t += *vel;
            }
        }
        state.iteration += 1;
        Ok(())
    }
}
