use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{argument, dimension, Result};
use crate::math;
use crate::rng::shuffle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub domain: usize,
}

/// Examples of a single domain in matrix form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSample {
    pub domain: usize,
    /// `n × D`, one example per row.
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl DomainSample {
    pub fn new(domain: usize, features: Tensor, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(dimension(format!("{} feature rows for {} labels", features.rows(), labels.len())));
        }
        Ok(DomainSample { domain, features, labels })
    }

    pub fn from_examples(domain: usize, examples: &[LabeledExample]) -> Result<Self> {
        let Some(first) = examples.first() else {
            return Err(argument(format!("domain {domain} has no examples")));
        };
        let d = first.features.len();
        let mut data = Vec::with_capacity(examples.len() * d);
        for e in examples {
            if e.features.len() != d {
                return Err(dimension(format!("feature dimension {} vs {d}", e.features.len())));
            }
            data.extend_from_slice(&e.features);
        }
        let features = Tensor::matrix(examples.len(), d, data)?;
        DomainSample::new(domain, features, examples.iter().map(|e| e.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Result<DomainSample> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        DomainSample::new(self.domain, features, labels)
    }

    pub fn to_examples(&self) -> Vec<LabeledExample> {
        (0..self.len())
            .map(|i| LabeledExample { features: self.features.row(i).to_vec(), label: self.labels[i], domain: self.domain })
            .collect()
    }
}

/// Examples grouped by domain index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub groups: BTreeMap<usize, Vec<LabeledExample>>,
}

impl Dataset {
    pub fn from_examples(examples: Vec<LabeledExample>) -> Result<Self> {
        let dim = examples.first().map(|e| e.features.len()).unwrap_or(0);
        let mut groups: BTreeMap<usize, Vec<LabeledExample>> = BTreeMap::new();
        for e in examples {
            if e.features.len() != dim {
                return Err(dimension(format!("feature dimension {} vs {dim}", e.features.len())));
            }
            groups.entry(e.domain).or_default().push(e);
        }
        Ok(Dataset { dim, groups })
    }

    pub fn counts(&self) -> BTreeMap<usize, usize> {
        self.groups.iter().map(|(k, v)| (*k, v.len())).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.groups.values().flatten().map(|e| e.label + 1).max().unwrap_or(0)
    }

    pub fn domain_sample(&self, domain: usize) -> Result<DomainSample> {
        let ex = self
            .groups
            .get(&domain)
            .ok_or_else(|| argument(format!("dataset has no domain {domain}")))?;
        DomainSample::from_examples(domain, ex)
    }
}

/// Allocate `n` items to partitions proportionally to `fractions`.
fn allocate(n: usize, fractions: &[f64], exhaustive: bool) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| math::floor(r + 1e-9) as usize).collect();
    if exhaustive {
        let mut rest = n.saturating_sub(counts.iter().sum());
        let mut order: Vec<usize> = (0..fractions.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - counts[a] as f64;
            let fb = raw[b] - counts[b] as f64;
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Stratified split by (domain, class) into disjoint partitions.
pub fn split<R: Rng + ?Sized>(dataset: &Dataset, fractions: &[f64], rng: &mut R) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) {
        return Err(argument("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(argument(format!("split fractions sum to {total} > 1")));
    }
    let exhaustive = math::abs(total - 1.0) <= 1e-9;
    let mut parts: Vec<Dataset> = (0..fractions.len())
        .map(|_| Dataset { dim: dataset.dim, groups: BTreeMap::new() })
        .collect();
    for (&domain, examples) in &dataset.groups {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, e) in examples.iter().enumerate() {
            by_class.entry(e.label).or_default().push(i);
        }
        for (class, mut idx) in by_class {
            if idx.len() < fractions.len() {
                return Err(argument(format!(
                    "domain {domain} class {class} has {} examples for {} partitions",
                    idx.len(),
                    fractions.len()
                )));
            }
            shuffle(&mut idx, rng);
            let counts = allocate(idx.len(), fractions, exhaustive);
            let mut start = 0;
            for (p, c) in counts.into_iter().enumerate() {
                let group = parts[p].groups.entry(domain).or_default();
                group.extend(idx[start..start + c].iter().map(|&i| examples[i].clone()));
                start += c;
            }
        }
    }
    Ok(parts)
}
