use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{argument, Result};
use crate::math;
use crate::rng::{seeded, standard_normal};

/// Allowed deviation of each projection column norm from one.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Random `d × p` projection whose output units have unit-norm weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomProjection {
    pub matrix: Tensor,
    pub seed: u64,
}

/// Standard normal entries, then every output column scaled to unit L2 norm.
pub fn init_projection(d: usize, p: usize, seed: u64) -> Result<RandomProjection> {
    if d == 0 || p == 0 {
        return Err(argument(format!("projection needs positive sizes, got {d}x{p}")));
    }
    let mut rng = seeded(seed);
    let mut data: Vec<f64> = (0..d * p).map(|_| standard_normal(&mut rng)).collect();
    for j in 0..p {
        let norm = math::sqrt((0..d).map(|i| data[i * p + j] * data[i * p + j]).sum::<f64>());
        if !(norm > 0.0) {
            return Err(argument(format!("degenerate projection column {j}")));
        }
        for i in 0..d {
            data[i * p + j] /= norm;
        }
    }
    Ok(RandomProjection { matrix: Tensor::matrix(d, p, data)?, seed })
}

impl RandomProjection {
    pub fn inputs(&self) -> usize {
        self.matrix.rows()
    }

    pub fn outputs(&self) -> usize {
        self.matrix.cols()
    }

    /// L2 norm of every output unit's weight vector.
    pub fn column_norms(&self) -> Vec<f64> {
        let (d, p) = (self.inputs(), self.outputs());
        (0..p)
            .map(|j| math::sqrt((0..d).map(|i| self.matrix.get(i, j) * self.matrix.get(i, j)).sum::<f64>()))
            .collect()
    }
}
