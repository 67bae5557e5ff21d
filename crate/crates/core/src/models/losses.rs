use alloc::format;
use alloc::vec::Vec;

use crate::engine::smoothed_targets;
use crate::error::{argument, Result};
use crate::math;

/// Label-smoothed cross-entropy of a single logit row.
pub fn smoothed_cross_entropy(logits: &[f64], y: usize, ls: f64) -> Result<f64> {
    let c = logits.len();
    if y >= c {
        return Err(argument(format!("label {y} out of range for {c} classes")));
    }
    let q = smoothed_targets(&[y], c, ls)?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(logits.iter().map(|v| math::exp(v - max)).sum::<f64>());
    Ok(q.data().iter().zip(logits).map(|(qj, lj)| -qj * (lj - lse)).sum())
}

/// Entropy of the smoothed target for `classes` classes; the lower bound
/// of [`smoothed_cross_entropy`].
pub fn target_entropy(classes: usize, ls: f64) -> Result<f64> {
    let q = smoothed_targets(&[0], classes, ls)?;
    Ok(q.data().iter().filter(|p| **p > 0.0).map(|p| -p * math::ln(*p)).sum())
}

/// One-vs-all domain targets: 1 where the example comes from domain `k`.
pub fn ova_labels(domains: &[usize], k: usize, num_domains: usize) -> Result<Vec<f64>> {
    if k >= num_domains {
        return Err(argument(format!("discriminator {k} out of range for {num_domains} domains")));
    }
    Ok(domains.iter().map(|&d| if d == k { 1.0 } else { 0.0 }).collect())
}
