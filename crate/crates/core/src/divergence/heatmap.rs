use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::matrix::DivergenceMatrix;
use crate::error::{argument, Result};
use crate::math;

/// Entrywise `baseline − candidate`; positive entries are pairs the
/// candidate brought closer together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapDelta {
    pub labels: Vec<alloc::string::String>,
    pub delta: Vec<Vec<f64>>,
    /// Fraction of off-diagonal pairs with a positive delta.
    pub fraction_positive: f64,
    pub mean_delta: f64,
}

pub fn heatmap_delta(erm: &DivergenceMatrix, g2dm: &DivergenceMatrix) -> Result<HeatmapDelta> {
    if erm.labels != g2dm.labels {
        return Err(argument("divergence matrices have different domain labels"));
    }
    if erm.len() < 2 {
        return Err(argument("heatmap needs at least 2 domains"));
    }
    let n = erm.len();
    let delta: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { erm.get(i, j) - g2dm.get(i, j) }).collect()).collect();
    let off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| delta[i][j]).collect();
    let positive = off.iter().filter(|d| **d > 0.0).count();
    Ok(HeatmapDelta {
        labels: erm.labels.clone(),
        fraction_positive: positive as f64 / off.len() as f64,
        mean_delta: math::mean(&off),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn matrix(v: Vec<Vec<f64>>) -> DivergenceMatrix {
        let labels = (0..v.len()).map(|i| format!("d{i}")).collect();
        DivergenceMatrix { labels, values: v, noise_tolerance: 0.15, clamp_events: 0 }
    }

    #[test]
    fn identical_matrices_give_zero() {
        let m = matrix(vec![vec![0.0, 0.5, 1.0], vec![0.5, 0.0, 0.7], vec![1.0, 0.7, 0.0]]);
        let h = heatmap_delta(&m, &m).unwrap();
        assert!(h.delta.iter().flatten().all(|d| *d == 0.0));
        assert_eq!(h.fraction_positive, 0.0);
    }

    #[test]
    fn uniform_improvement() {
        let a = matrix(vec![vec![0.0, 0.5, 1.0], vec![0.5, 0.0, 0.7], vec![1.0, 0.7, 0.0]]);
        let b = matrix(a.values.iter().enumerate().map(|(i, r)| r.iter().enumerate().map(|(j, v)| if i == j { 0.0 } else { v - 0.2 }).collect()).collect());
        let h = heatmap_delta(&a, &b).unwrap();
        assert_eq!(h.fraction_positive, 1.0);
        assert!((h.mean_delta - 0.2).abs() < 1e-12);
    }

    #[test]
    fn label_mismatch() {
        let a = matrix(vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        let mut b = a.clone();
        b.labels[1] = "other".into();
        assert!(heatmap_delta(&a, &b).is_err());
    }
}
