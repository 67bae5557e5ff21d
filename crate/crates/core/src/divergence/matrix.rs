use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::estimator::{proxy_a_distance, EstimatorConfig};
use crate::engine::Tensor;
use crate::error::{argument, Result};
use crate::models::ModelBundle;
use crate::rng::derive_seed;

/// Symmetric matrix of pairwise divergence estimates with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Estimation noise bound the entries should be read with.
    pub noise_tolerance: f64,
    /// Number of estimates clamped at zero.
    pub clamp_events: usize,
}

impl DivergenceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Largest off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        self.off_diagonal().fold(0.0, f64::max)
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let v: Vec<f64> = self.off_diagonal().collect();
        crate::math::mean(&v)
    }

    /// Entries above the diagonal in row-major order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| self.values[i][j]))
    }
}

/// Divergence between every pair of samples. Each unordered pair is estimated
/// once with its own seed and mirrored, so the result is exactly symmetric.
pub fn pairwise_matrix(samples: &[(String, Tensor)], cfg: &EstimatorConfig) -> Result<DivergenceMatrix> {
    if samples.len() < 2 {
        return Err(argument(format!("pairwise divergences need at least 2 domains, got {}", samples.len())));
    }
    let n = samples.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut clamp_events = 0;
    for i in 0..n {
        for j in i + 1..n {
            let pair_seed = derive_seed(cfg.seed, (i * n + j) as u64);
            let est = proxy_a_distance(&samples[i].1, &samples[j].1, &cfg.with_seed(pair_seed))?;
            clamp_events += est.clamped as usize;
            values[i][j] = est.distance;
            values[j][i] = est.distance;
        }
    }
    Ok(DivergenceMatrix {
        labels: samples.iter().map(|(l, _)| l.clone()).collect(),
        values,
        noise_tolerance: cfg.noise_tolerance,
        clamp_events,
    })
}

/// [`pairwise_matrix`] on the encoder outputs `z = E(x)`.
pub fn encoded_pairwise_matrix(
    bundle: &ModelBundle,
    samples: &[(String, Tensor)],
    cfg: &EstimatorConfig,
) -> Result<DivergenceMatrix> {
    let encoded = samples
        .iter()
        .map(|(l, x)| Ok((l.clone(), bundle.encode_tensor(x)?)))
        .collect::<Result<Vec<_>>>()?;
    pairwise_matrix(&encoded, cfg)
}
