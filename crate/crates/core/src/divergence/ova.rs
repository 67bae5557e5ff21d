use alloc::format;
use alloc::vec::Vec;

use crate::engine::{LossKind, Tape, Target, Tensor};
use crate::error::{argument, Result};
use crate::math;
use crate::models::{ova_labels, Mode, ModelBundle};

/// For every discriminator `k`, the absolute difference between its
/// one-vs-all loss on the pooled batch and the sum of its pairwise terms.
///
/// `encoded[l]` holds the `M` encoded rows of domain `l`. Domain `k`'s rows
/// are split into `N_S − 1` contiguous chunks; the chunk paired with domain
/// `l` contributes the positive part of the `(k, l)` term and domain `l`'s
/// rows the negative part. Every term is normalized by the pooled size
/// `N_S·M`, as the pooled loss is.
pub fn ova_decomposition_check(bundle: &ModelBundle, encoded: &[Tensor]) -> Result<Vec<f64>> {
    let ns = encoded.len();
    if ns < 2 {
        return Err(argument(format!("decomposition needs at least 2 domains, got {ns}")));
    }
    if bundle.num_discriminators() != ns {
        return Err(argument(format!("{} discriminators for {ns} domains", bundle.num_discriminators())));
    }
    let m = encoded[0].rows();
    if let Some((l, t)) = encoded.iter().enumerate().find(|(_, t)| t.rows() != m) {
        return Err(argument(format!("unbalanced batches: domain {l} has {} rows, domain 0 has {m}", t.rows())));
    }
    if m < ns - 1 {
        return Err(argument(format!("{m} rows per domain cannot be split into {} chunks", ns - 1)));
    }
    let pooled = Tensor::vstack(&encoded.iter().collect::<Vec<_>>())?;
    let domains: Vec<usize> = (0..ns).flat_map(|l| core::iter::repeat_n(l, m)).collect();
    let total = (ns * m) as f64;

    let mut residuals = Vec::with_capacity(ns);
    for k in 0..ns {
        let targets = ova_labels(&domains, k, ns)?;
        let pooled_loss = {
            let mut tape = Tape::new(&bundle.params);
            let z = tape.constant(pooled.clone())?;
            let s = bundle.discriminate(&mut tape, k, z, Mode::Detached)?;
            let l = tape.loss(s, Target::Binary(&targets), LossKind::BinaryCrossEntropy)?;
            tape.value(l).item()
        };

        let per_domain: Vec<Tensor> = encoded.iter().map(|z| bundle.discriminate_tensor(k, z)).collect::<Result<_>>()?;
        let positive = |s: f64| math::softplus(-s);
        let negative = |s: f64| math::softplus(s);
        let own = per_domain[k].data();
        let others: Vec<usize> = (0..ns).filter(|l| *l != k).collect();
        let mut pair_sum = 0.0;
        for (c, &l) in others.iter().enumerate() {
            let lo = c * m / others.len();
            let hi = (c + 1) * m / others.len();
            let pos: f64 = own[lo..hi].iter().map(|s| positive(*s)).sum();
            let neg: f64 = per_domain[l].data().iter().map(|s| negative(*s)).sum();
            pair_sum += (pos + neg) / total;
        }
        residuals.push(math::abs(pooled_loss - pair_sum));
    }
    Ok(residuals)
}
