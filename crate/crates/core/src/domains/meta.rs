use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_examples, DomainSpec, LabeledExample};
use crate::error::{argument, Result};
use crate::math;
use crate::rng::uniform;

/// Allowed deviation of a probability vector's sum from one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(argument("probability vector is empty"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
        return Err(argument(format!("probability entry {w} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if math::abs(total - 1.0) > SIMPLEX_TOLERANCE {
        return Err(argument(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(argument("degenerate sampling weights"));
    }
    let u = uniform(rng) * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Mixture coefficients over source domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(MixtureWeights(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(argument("mixture over zero components"));
        }
        MixtureWeights::new(alloc::vec![1.0 / n as f64; n])
    }

    /// The corner of the simplex at component `i`.
    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(argument(format!("vertex {i} of an {n}-simplex")));
        }
        let mut w = alloc::vec![0.0; n];
        w[i] = 1.0;
        MixtureWeights::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Draw a component index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        draw_index(&self.0, rng)
    }
}

/// A weighted collection of domains sharing one labeling rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaDistribution {
    domains: Vec<DomainSpec>,
    weights: Vec<f64>,
    /// When set, each domain draw gets a fresh rotation angle drawn
    /// uniformly from this range instead of the listed spec's angle.
    #[serde(default)]
    continuous_rotation: Option<(f64, f64)>,
}

impl MetaDistribution {
    pub fn new(domains: Vec<DomainSpec>, weights: Vec<f64>) -> Result<Self> {
        if domains.is_empty() {
            return Err(argument("meta-distribution needs at least one domain"));
        }
        if domains.len() != weights.len() {
            return Err(argument(format!("{} domains but {} weights", domains.len(), weights.len())));
        }
        check_simplex(&weights)?;
        let family = domains[0].family.id();
        for d in &domains {
            d.validate()?;
            if d.family.id() != family || d.dim() != domains[0].dim() {
                return Err(argument("all domains of a meta-distribution must share one family and dimension"));
            }
        }
        Ok(MetaDistribution { domains, weights, continuous_rotation: None })
    }

    pub fn uniform(domains: Vec<DomainSpec>) -> Result<Self> {
        let n = domains.len().max(1);
        MetaDistribution::new(domains, alloc::vec![1.0 / n as f64; n])
    }

    /// Replace the discrete rotation of each draw by a uniform angle in `[lo, hi)`.
    pub fn with_continuous_rotation(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(argument("continuous rotation range must satisfy lo <= hi"));
        }
        self.continuous_rotation = Some((lo, hi));
        Ok(self)
    }

    pub fn domains(&self) -> &[DomainSpec] {
        &self.domains
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Identifier of the shared labeling rule.
    pub fn labeling_rule(&self) -> &'static str {
        self.domains[0].family.id()
    }

    /// Draw a domain (first stage of the generating process).
    pub fn sample_domain_spec<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DomainSpec> {
        let i = sample_domain(self, rng)?;
        let mut spec = self.domains[i].clone();
        if let Some((lo, hi)) = self.continuous_rotation {
            spec.rotation_deg = lo + (hi - lo) * uniform(rng);
        }
        Ok(spec)
    }

    /// Two-stage sampling: a domain per example, then one point from it.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<LabeledExample>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let spec = self.sample_domain_spec(rng)?;
            out.extend(sample_examples(&spec, 1, rng)?);
        }
        Ok(out)
    }
}

/// Draw a domain index according to the meta-distribution's weights.
pub fn sample_domain<R: Rng + ?Sized>(meta: &MetaDistribution, rng: &mut R) -> Result<usize> {
    draw_index(&meta.weights, rng)
}

/// Draw `n` examples from the mixture `Σ πᵢ·domainᵢ`. Also returns the
/// component each example came from.
pub fn sample_mixture<R: Rng + ?Sized>(
    domains: &[DomainSpec],
    pi: &MixtureWeights,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<LabeledExample>, Vec<usize>)> {
    if pi.len() != domains.len() {
        return Err(argument(format!("{} mixture weights for {} domains", pi.len(), domains.len())));
    }
    check_simplex(pi.as_slice())?;
    let mut examples = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pi.sample(rng)?;
        examples.extend(sample_examples(&domains[k], 1, rng)?);
        origins.push(k);
    }
    Ok((examples, origins))
}
