use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::estimator::{proxy_a_distance, EstimatorConfig, PadEstimate};
use super::matrix::{pairwise_matrix, DivergenceMatrix};
use crate::domains::{DomainSample, MixtureWeights};
use crate::engine::Tensor;
use crate::error::{argument, dimension, Result};
use crate::rng::{self, StreamRng};

/// Random numbers behind a mixture draw. Reusing one plan for different
/// weights keeps the draws coupled: slot `i` picks its component by inverse
/// CDF of the same uniform, and each component hands out rows in a fixed
/// shuffled order.
pub(crate) struct MixturePlan {
    uniforms: Vec<f64>,
    orders: Vec<Vec<usize>>,
}

impl MixturePlan {
    pub(crate) fn new(sizes: &[usize], n: usize, rng: &mut StreamRng) -> MixturePlan {
        let uniforms = (0..n).map(|_| rng::uniform(rng)).collect();
        let orders = sizes.iter().map(|s| rng::permutation(*s, rng)).collect();
        MixturePlan { uniforms, orders }
    }

    pub(crate) fn draw(&self, domains: &[&DomainSample], pi: &MixtureWeights) -> Result<(Tensor, Vec<usize>)> {
        if pi.len() != domains.len() || domains.len() != self.orders.len() {
            return Err(argument(format!("{} mixture weights for {} domains", pi.len(), domains.len())));
        }
        let w = pi.as_slice();
        let dim = domains[0].dim();
        let mut used = vec![0usize; domains.len()];
        let mut data = Vec::with_capacity(self.uniforms.len() * dim);
        let mut labels = Vec::with_capacity(self.uniforms.len());
        for &u in &self.uniforms {
            let mut acc = 0.0;
            let mut k = w.iter().rposition(|x| *x > 0.0).unwrap_or(0);
            for (i, &p) in w.iter().enumerate() {
                acc += p;
                if p > 0.0 && u < acc {
                    k = i;
                    break;
                }
            }
            let order = &self.orders[k];
            if order.is_empty() {
                return Err(argument(format!("mixture component {k} has no rows")));
            }
            let row = order[used[k] % order.len()];
            used[k] += 1;
            let d = domains[k];
            if d.dim() != dim {
                return Err(dimension(format!("component {k} has {} features, component 0 has {dim}", d.dim())));
            }
            data.extend_from_slice(d.features.row(row));
            labels.push(d.labels[row]);
        }
        Ok((Tensor::matrix(labels.len(), dim, data)?, labels))
    }
}

/// `n` labeled rows from the empirical mixture `Σ πᵢ·domainᵢ`.
pub fn draw_mixture(
    domains: &[DomainSample],
    pi: &MixtureWeights,
    n: usize,
    rng: &mut StreamRng,
) -> Result<(Tensor, Vec<usize>)> {
    if domains.is_empty() || n == 0 {
        return Err(argument("mixture draw needs domains and a positive size"));
    }
    let sizes: Vec<usize> = domains.iter().map(DomainSample::len).collect();
    let refs: Vec<&DomainSample> = domains.iter().collect();
    MixturePlan::new(&sizes, n, rng).draw(&refs, pi)
}

fn halves(domains: &[DomainSample], rng: &mut StreamRng) -> Result<(Vec<DomainSample>, Vec<DomainSample>)> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for d in domains {
        if d.len() < 2 {
            return Err(argument(format!("domain {} has fewer than 2 rows", d.domain)));
        }
        let perm = rng::permutation(d.len(), rng);
        let (l, r) = perm.split_at(d.len() / 2);
        a.push(d.select(l)?);
        b.push(d.select(r)?);
    }
    Ok((a, b))
}

/// Divergence between the mixtures `π` and `π′` of `domains`. The two
/// mixtures are drawn from disjoint halves of every domain.
pub fn mixture_divergence(
    domains: &[DomainSample],
    pi: &MixtureWeights,
    pi_prime: &MixtureWeights,
    n: usize,
    cfg: &EstimatorConfig,
    rng: &mut StreamRng,
) -> Result<PadEstimate> {
    let (a, b) = halves(domains, rng)?;
    let (xa, _) = draw_mixture(&a, pi, n, rng)?;
    let (xb, _) = draw_mixture(&b, pi_prime, n, rng)?;
    proxy_a_distance(&xa, &xb, &cfg.with_seed(rng.next_u64()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullPair {
    pub pi: Vec<f64>,
    pub pi_prime: Vec<f64>,
    pub divergence: f64,
}

/// Outcome of checking mixture divergences against the largest source pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullReport {
    /// `ε̂`: largest pairwise source divergence.
    pub epsilon: f64,
    pub tau: f64,
    pub pairs: Vec<HullPair>,
    /// Pairs with divergence `≤ ε̂ + τ`.
    pub satisfied: usize,
    pub fraction_satisfied: f64,
    pub clamp_events: usize,
    pub matrix: DivergenceMatrix,
}

/// Draw `n_pairs` flat-Dirichlet weight pairs and compare the divergence of
/// each mixture pair with `ε̂ + τ`.
pub fn hull_bound_check(
    domains: &[DomainSample],
    n_pairs: usize,
    tau: f64,
    mixture_size: usize,
    cfg: &EstimatorConfig,
    rng: &mut StreamRng,
) -> Result<HullReport> {
    if domains.len() < 2 {
        return Err(argument(format!("hull check needs at least 2 domains, got {}", domains.len())));
    }
    if n_pairs == 0 || !(tau >= 0.0) {
        return Err(argument("hull check needs at least one pair and a non-negative tolerance"));
    }
    let named: Vec<_> = domains.iter().map(|d| (d.domain.to_string(), d.features.clone())).collect();
    let matrix = pairwise_matrix(&named, &cfg.with_seed(rng.next_u64()))?;
    let epsilon = matrix.max_off_diagonal();
    let mut clamp_events = matrix.clamp_events;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut satisfied = 0;
    for _ in 0..n_pairs {
        let pi = MixtureWeights::new(rng::flat_dirichlet(rng, domains.len()))?;
        let pi_prime = MixtureWeights::new(rng::flat_dirichlet(rng, domains.len()))?;
        let est = mixture_divergence(domains, &pi, &pi_prime, mixture_size, cfg, rng)?;
        clamp_events += est.clamped as usize;
        satisfied += (est.distance <= epsilon + tau) as usize;
        pairs.push(HullPair { pi: pi.as_slice().to_vec(), pi_prime: pi_prime.as_slice().to_vec(), divergence: est.distance });
    }
    Ok(HullReport {
        epsilon,
        tau,
        fraction_satisfied: satisfied as f64 / n_pairs as f64,
        satisfied,
        pairs,
        clamp_events,
        matrix,
    })
}
