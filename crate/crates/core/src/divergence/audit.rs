use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::estimator::{proxy_a_distance, EstimatorConfig, Probe};
use super::hull::MixturePlan;
use super::matrix::{pairwise_matrix, DivergenceMatrix};
use crate::domains::{DomainSample, MixtureWeights};
use crate::engine::Tensor;
use crate::error::{argument, Result};
use crate::models::{fraction_equal, ModelBundle};
use crate::rng::{self, stream};

/// Search and estimator settings of [`bound_audit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Grid points per simplex axis, endpoints included.
    pub grid_points: usize,
    /// Local Dirichlet refinements after the grid search.
    pub refinements: usize,
    /// Mixing weight of each refinement draw against the incumbent.
    pub refine_radius: f64,
    /// Rows per mixture draw.
    pub mixture_size: usize,
    /// Cheaper estimator used while searching for `π*`.
    pub search: EstimatorConfig,
    /// Estimator for the reported `γ̂` and `ε̂`.
    pub estimator: EstimatorConfig,
    /// Training budget of the fresh hypothesis behind `λ̂`.
    pub head: EstimatorConfig,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        let linear = EstimatorConfig { hidden: Vec::new(), ..EstimatorConfig::default() };
        AuditConfig {
            grid_points: 11,
            refinements: 200,
            refine_radius: 0.2,
            mixture_size: 400,
            search: EstimatorConfig { epochs: 10, cap: 400, ..linear.clone() },
            estimator: linear.clone(),
            head: EstimatorConfig { epochs: 60, ..linear },
            seed: 0,
        }
    }
}

/// Empirical terms of the unseen-domain risk bound for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub pi_star: MixtureWeights,
    /// Divergence between the unseen domain and its closest mixture.
    pub gamma: f64,
    /// Largest pairwise divergence among the sources.
    pub epsilon: f64,
    /// Joint risk of a fresh hypothesis on the closest mixture and the unseen domain.
    pub lambda: f64,
    pub source_risks: Vec<f64>,
    /// Risk of the audited model on the unseen domain.
    pub lhs: f64,
    pub rhs: f64,
    /// Always true: the audit reads unseen labels.
    pub privileged: bool,
    pub search_evaluations: usize,
    pub clamp_events: usize,
    pub matrix: DivergenceMatrix,
}

impl BoundAudit {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// Every point of the simplex grid with `points` values per axis.
pub(crate) fn simplex_grid(dims: usize, points: usize) -> Result<Vec<Vec<f64>>> {
    if points < 2 {
        return Err(argument(format!("simplex grid needs at least 2 points per axis, got {points}")));
    }
    if dims == 0 {
        return Err(argument("simplex grid of dimension 0"));
    }
    let steps = points - 1;
    let mut out = Vec::new();
    let mut current = vec![0usize; dims];
    fn rec(i: usize, left: usize, current: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if i + 1 == current.len() {
            current[i] = left;
            out.push(current.iter().map(|c| *c as f64 / steps as f64).collect());
            return;
        }
        for c in (0..=left).rev() {
            current[i] = c;
            rec(i + 1, left - c, current, steps, out);
        }
    }
    rec(0, steps, &mut current, steps, &mut out);
    Ok(out)
}

/// Audit the unseen-domain risk bound for `bundle`. All divergences are
/// measured on encoded features; risks are 0-1 errors.
pub fn bound_audit(
    sources: &[DomainSample],
    unseen: &DomainSample,
    bundle: &ModelBundle,
    cfg: &AuditConfig,
) -> Result<BoundAudit> {
    if sources.is_empty() || unseen.is_empty() {
        return Err(argument("audit needs sources and a non-empty unseen sample"));
    }
    if !(cfg.refine_radius > 0.0 && cfg.refine_radius <= 1.0) || cfg.mixture_size == 0 {
        return Err(argument("refine_radius must lie in (0, 1] and mixture_size must be positive"));
    }
    let ns = sources.len();
    let grid = simplex_grid(ns, cfg.grid_points)?;
    let mut rng = rng::stream_rng(cfg.seed, stream::ESTIMATOR);

    let encoded: Vec<DomainSample> = sources
        .iter()
        .map(|s| DomainSample::new(s.domain, bundle.encode_tensor(&s.features)?, s.labels.clone()))
        .collect::<Result<_>>()?;
    let refs: Vec<&DomainSample> = encoded.iter().collect();
    let z_unseen = bundle.encode_tensor(&unseen.features)?;
    let sizes: Vec<usize> = encoded.iter().map(DomainSample::len).collect();

    let plan = MixturePlan::new(&sizes, cfg.mixture_size, &mut rng);
    let search_seed = rng.next_u64();
    let mut clamp_events = 0;
    let evaluate = |pi: &MixtureWeights, clamps: &mut usize| -> Result<f64> {
        let (x, _) = plan.draw(&refs, pi)?;
        let est = proxy_a_distance(&x, &z_unseen, &cfg.search.with_seed(search_seed))?;
        *clamps += est.clamped as usize;
        // rank by the unclamped value: near-copies all clamp to zero
        Ok(2.0 * (1.0 - 2.0 * est.error))
    };

    let mut best = MixtureWeights::new(grid[0].clone())?;
    let mut best_value = f64::INFINITY;
    let mut evaluations = 0;
    for point in &grid {
        let pi = MixtureWeights::new(point.clone())?;
        let v = evaluate(&pi, &mut clamp_events)?;
        evaluations += 1;
        if v < best_value {
            best_value = v;
            best = pi;
        }
    }
    for _ in 0..cfg.refinements {
        let dir = rng::flat_dirichlet(&mut rng, ns);
        let w: Vec<f64> =
            best.as_slice().iter().zip(&dir).map(|(b, d)| (1.0 - cfg.refine_radius) * b + cfg.refine_radius * d).collect();
        let total: f64 = w.iter().sum();
        let pi = MixtureWeights::new(w.iter().map(|v| v / total).collect())?;
        let v = evaluate(&pi, &mut clamp_events)?;
        evaluations += 1;
        if v < best_value {
            best_value = v;
            best = pi;
        }
    }

    // fresh draw and full estimator, so the reported value is not the
    // minimum of many noisy evaluations
    let fresh = MixturePlan::new(&sizes, cfg.mixture_size, &mut rng);
    let (x_star, y_star) = fresh.draw(&refs, &best)?;
    let gamma_est = proxy_a_distance(&x_star, &z_unseen, &cfg.estimator.with_seed(rng.next_u64()))?;
    clamp_events += gamma_est.clamped as usize;

    let named: Vec<_> = encoded.iter().map(|d| (d.domain.to_string(), d.features.clone())).collect();
    let matrix = if ns >= 2 {
        pairwise_matrix(&named, &cfg.estimator.with_seed(rng.next_u64()))?
    } else {
        DivergenceMatrix {
            labels: named.into_iter().map(|(l, _)| l).collect(),
            values: vec![vec![0.0]],
            noise_tolerance: cfg.estimator.noise_tolerance,
            clamp_events: 0,
        }
    };
    clamp_events += matrix.clamp_events;
    let epsilon = matrix.max_off_diagonal();

    // λ̂: one hypothesis of the classifier's class fitted on both domains
    let pooled = Tensor::vstack(&[&x_star, &z_unseen])?;
    let mut labels = y_star.clone();
    labels.extend_from_slice(&unseen.labels);
    let head_cfg = EstimatorConfig { hidden: bundle.arch.model.classifier_hidden.clone(), ..cfg.head.clone() };
    let classes = bundle.arch.num_classes;
    let head = Probe::fit_classes(&pooled, &labels, classes, &head_cfg, &mut rng::stream_rng(rng.next_u64(), stream::ESTIMATOR))?;
    let pred = head.predict(&pooled)?;
    let n_mix = y_star.len();
    let lambda = (1.0 - fraction_equal(&pred[..n_mix], &y_star)) + (1.0 - fraction_equal(&pred[n_mix..], &unseen.labels));

    let source_risks = sources.iter().map(|s| Ok(1.0 - bundle.accuracy(s)?)).collect::<Result<Vec<f64>>>()?;
    let lhs = 1.0 - bundle.accuracy(unseen)?;
    let mixed_risk: f64 = best.as_slice().iter().zip(&source_risks).map(|(p, r)| p * r).sum();
    let rhs = mixed_risk + 0.5 * (gamma_est.distance + epsilon) + lambda;
    Ok(BoundAudit {
        pi_star: best,
        gamma: gamma_est.distance,
        epsilon,
        lambda,
        source_risks,
        lhs,
        rhs,
        privileged: true,
        search_evaluations: evaluations,
        clamp_events,
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        assert_eq!(simplex_grid(3, 11).unwrap().len(), 66);
        assert_eq!(simplex_grid(2, 2).unwrap().len(), 2);
        assert!(simplex_grid(3, 1).is_err());
        for p in simplex_grid(4, 5).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
