use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::Aggregation;
use super::hypervolume::NADIR_FLOOR;
use crate::domains::DomainSample;
use crate::engine::{Gradients, LossKind, OptimState, Sgd, Tape, Target, Tensor, Var};
use crate::error::{argument, dimension, Error, Result};
use crate::models::{ova_labels, Mode, ModelBundle};

/// One minibatch drawn from the sources. `domains[i]` is the position of the
/// source that row `i` came from, not its catalogue id.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceBatch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub domains: Vec<usize>,
    pub num_domains: usize,
}

impl SourceBatch {
    /// Rows `indices[k]` of `samples[k]` for every source `k`.
    pub fn gather(samples: &[&DomainSample], indices: &[Vec<usize>]) -> Result<SourceBatch> {
        if samples.len() != indices.len() || samples.is_empty() {
            return Err(argument(format!("{} samples but {} index lists", samples.len(), indices.len())));
        }
        let dim = samples[0].dim();
        let total: usize = indices.iter().map(Vec::len).sum();
        if total == 0 {
            return Err(argument("empty batch"));
        }
        let mut data = Vec::with_capacity(total * dim);
        let mut labels = Vec::with_capacity(total);
        let mut domains = Vec::with_capacity(total);
        for (k, (s, idx)) in samples.iter().zip(indices).enumerate() {
            if s.dim() != dim {
                return Err(dimension(format!("source {k} has {} features, source 0 has {dim}", s.dim())));
            }
            for &i in idx {
                if i >= s.len() {
                    return Err(argument(format!("row {i} out of range for source {k} ({} rows)", s.len())));
                }
                data.extend_from_slice(s.features.row(i));
                labels.push(s.labels[i]);
                domains.push(k);
            }
        }
        Ok(SourceBatch { features: Tensor::matrix(total, dim, data)?, labels, domains, num_domains: samples.len() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows per source, or an error if the sources are not equally represented.
    pub fn per_domain(&self) -> Result<usize> {
        let mut counts = alloc::vec![0usize; self.num_domains];
        for &d in &self.domains {
            if d >= self.num_domains {
                return Err(argument(format!("domain index {d} out of range for {} sources", self.num_domains)));
            }
            counts[d] += 1;
        }
        if counts.iter().any(|c| *c != counts[0]) || counts[0] == 0 {
            return Err(argument(format!("unbalanced batch: rows per source {counts:?}")));
        }
        Ok(counts[0])
    }
}

/// Losses seen by the discriminators before their update.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorStep {
    pub losses: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Update every discriminator once on its one-vs-all loss. The encoder is
/// evaluated but not differentiated, so its parameters are untouched.
pub fn discriminator_update(
    bundle: &mut ModelBundle,
    state: &mut OptimState,
    sgd: &Sgd,
    batch: &SourceBatch,
    lr: f64,
) -> Result<DiscriminatorStep> {
    batch.per_domain()?;
    let n = bundle.num_discriminators();
    if n != batch.num_domains {
        return Err(argument(format!("{n} discriminators for {} sources", batch.num_domains)));
    }
    let mut warnings = Vec::new();
    if n == 1 {
        warnings.push(String::from(
            "a single source gives its discriminator only positive examples; the domain loss carries no signal",
        ));
    }
    let z = bundle.encode_tensor(&batch.features)?;
    let mut losses = Vec::with_capacity(n);
    for k in 0..n {
        let targets = ova_labels(&batch.domains, k, n)?;
        let (loss, grads) = {
            let mut tape = Tape::new(&bundle.params);
            let zv = tape.constant(z.clone())?;
            let logit = bundle.discriminate(&mut tape, k, zv, Mode::Trainable)?;
            let l = tape.loss(logit, Target::Binary(&targets), LossKind::BinaryCrossEntropy)?;
            (tape.value(l).item(), tape.backward(l)?)
        };
        sgd.step(&mut bundle.params, &grads, state, lr)?;
        losses.push(loss);
    }
    Ok(DiscriminatorStep { losses, warnings })
}

/// Update the classifier on the (smoothed) task loss with `z` held fixed.
/// Returns the loss before the step.
pub fn classifier_update(
    bundle: &mut ModelBundle,
    state: &mut OptimState,
    sgd: &Sgd,
    batch: &SourceBatch,
    label_smoothing: f64,
    lr: f64,
) -> Result<f64> {
    let z = bundle.encode_tensor(&batch.features)?;
    let (loss, grads) = {
        let mut tape = Tape::new(&bundle.params);
        let zv = tape.constant(z)?;
        let logits = bundle.classify(&mut tape, zv, Mode::Trainable)?;
        let l = task_loss(&mut tape, logits, &batch.labels, label_smoothing)?;
        (tape.value(l).item(), tape.backward(l)?)
    };
    sgd.step(&mut bundle.params, &grads, state, lr)?;
    Ok(loss)
}

fn task_loss(tape: &mut Tape<'_>, logits: Var, labels: &[usize], ls: f64) -> Result<Var> {
    let kind = if ls == 0.0 { LossKind::CrossEntropy } else { LossKind::SmoothedCrossEntropy { smoothing: ls } };
    tape.loss(logits, Target::Classes(labels), kind)
}

/// What the encoder minimizes: `α·L_C + (1 − α)·A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderObjective {
    pub alpha: f64,
    pub aggregation: Aggregation,
    pub nadir_slack: f64,
    pub label_smoothing: f64,
}

/// Terms of the encoder objective at the current parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderLoss {
    /// `L_C`, or `None` when `α = 0` skipped it.
    pub task: Option<f64>,
    /// `A`, or `None` when `α = 1` (or no discriminators) skipped it.
    pub adversarial: Option<f64>,
}

/// Gradient of the encoder objective with respect to the encoder only.
/// Classifier and discriminators enter as constants.
pub fn encoder_gradient(bundle: &ModelBundle, batch: &SourceBatch, obj: &EncoderObjective) -> Result<(Gradients, EncoderLoss)> {
    if !(0.0..=1.0).contains(&obj.alpha) {
        return Err(argument(format!("alpha = {} outside [0, 1]", obj.alpha)));
    }
    let n = bundle.num_discriminators();
    let use_task = obj.alpha > 0.0;
    let use_adv = obj.alpha < 1.0 && n > 0;
    if !use_task && !use_adv {
        return Err(argument("alpha = 0 without discriminators leaves the encoder with no objective"));
    }

    let mut out = EncoderLoss { task: None, adversarial: None };
    let mut task_grads = None;
    if use_task {
        let mut tape = Tape::new(&bundle.params);
        let x = tape.constant(batch.features.clone())?;
        let z = bundle.encode(&mut tape, x, Mode::Trainable)?;
        let logits = bundle.classify(&mut tape, z, Mode::Detached)?;
        let l = task_loss(&mut tape, logits, &batch.labels, obj.label_smoothing)?;
        out.task = Some(tape.value(l).item());
        task_grads = Some(tape.backward(l)?);
    }
    let mut adv_grads = None;
    if use_adv {
        batch.per_domain()?;
        if n != batch.num_domains {
            return Err(argument(format!("{n} discriminators for {} sources", batch.num_domains)));
        }
        let mut tape = Tape::new(&bundle.params);
        let x = tape.constant(batch.features.clone())?;
        let z = bundle.encode(&mut tape, x, Mode::Trainable)?;
        let mut losses = Vec::with_capacity(n);
        for k in 0..n {
            let targets = ova_labels(&batch.domains, k, n)?;
            let logit = bundle.discriminate(&mut tape, k, z, Mode::Detached)?;
            losses.push(tape.loss(logit, Target::Binary(&targets), LossKind::BinaryCrossEntropy)?);
        }
        let a = adversarial_on_tape(&mut tape, &losses, obj.aggregation, obj.nadir_slack)?;
        out.adversarial = Some(tape.value(a).item());
        adv_grads = Some(tape.backward(a)?);
    }

    let grads = match (task_grads, adv_grads) {
        (Some(g), None) => g,
        (None, Some(g)) => g,
        (Some(mut g1), Some(g2)) => {
            g1.scale(obj.alpha);
            g1.add_scaled(&g2, 1.0 - obj.alpha)?;
            g1
        }
        (None, None) => unreachable!(),
    };
    Ok((grads, out))
}

fn adversarial_on_tape(tape: &mut Tape<'_>, losses: &[Var], aggregation: Aggregation, slack: f64) -> Result<Var> {
    match aggregation {
        Aggregation::Sum => {
            let mut acc = losses[0];
            for &l in &losses[1..] {
                acc = tape.add(acc, l)?;
            }
            tape.scale(acc, -1.0)
        }
        Aggregation::Hypervolume => {
            let mut confusion = Vec::with_capacity(losses.len());
            for &l in losses {
                let neg = tape.scale(l, -1.0)?;
                confusion.push(tape.exp(neg)?);
            }
            let worst = confusion.iter().map(|v| tape.value(*v).item()).fold(0.0f64, f64::max);
            let eta = (slack * worst).max(NADIR_FLOOR);
            let mut acc: Option<Var> = None;
            for c in confusion {
                if tape.value(c).item() >= eta {
                    return Err(Error::Numeric(format!("confusion loss reaches the nadir {eta}")));
                }
                let neg = tape.scale(c, -1.0)?;
                let gap = tape.shift(neg, eta)?;
                let term = tape.log(gap)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            tape.scale(acc.expect("at least one discriminator"), -1.0)
        }
    }
}

/// Compute the encoder gradient and apply it. The classifier and
/// discriminators must still hold the values the gradient should see.
pub fn encoder_update(
    bundle: &mut ModelBundle,
    state: &mut OptimState,
    sgd: &Sgd,
    batch: &SourceBatch,
    obj: &EncoderObjective,
    lr: f64,
) -> Result<EncoderLoss> {
    let (grads, loss) = encoder_gradient(bundle, batch, obj)?;
    sgd.step(&mut bundle.params, &grads, state, lr)?;
    Ok(loss)
}

/// Balanced accuracy of discriminator `k` at telling source `k` apart from
/// the other sources, averaged over `k`. Chance level is 0.5.
pub fn discriminator_accuracy(bundle: &ModelBundle, samples: &[&DomainSample]) -> Result<f64> {
    let n = bundle.num_discriminators();
    if n != samples.len() || n == 0 {
        return Err(argument(format!("{n} discriminators for {} samples", samples.len())));
    }
    let latents: Vec<Tensor> = samples.iter().map(|s| bundle.encode_tensor(&s.features)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for k in 0..n {
        let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for (j, z) in latents.iter().enumerate() {
            let logits = bundle.discriminate_tensor(k, z)?;
            for &s in logits.data() {
                if j == k {
                    pos += 1;
                    tp += (s > 0.0) as usize;
                } else {
                    neg += 1;
                    tn += (s <= 0.0) as usize;
                }
            }
        }
        let tpr = if pos > 0 { tp as f64 / pos as f64 } else { 0.5 };
        let tnr = if neg > 0 { tn as f64 / neg as f64 } else { 0.5 };
        total += 0.5 * (tpr + tnr);
    }
    Ok(total / n as f64)
}
