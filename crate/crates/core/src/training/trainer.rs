use alloc::format;
use alloc::vec::Vec;

use super::config::TrainConfig;
use super::history::{EpochRecord, MetricHistory};
use super::steps::{
    classifier_update, discriminator_accuracy, discriminator_update, encoder_gradient, EncoderObjective, SourceBatch,
};
use crate::domains::DomainSample;
use crate::engine::{plateau_decay, warmup_lr, LossKind, OptimState, Sgd, Tape, Target};
use crate::error::{argument, dimension, Result};
use crate::models::{Architecture, Mode, ModelBundle};
use crate::rng::{self, stream, StreamRng};

/// Training and validation split of one source domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceData {
    pub train: DomainSample,
    pub validation: DomainSample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub history: MetricHistory,
}

/// How the ERM baseline draws its minibatches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErmSampling {
    /// Uniformly from the union of the sources.
    Pooled,
    /// `m` examples from every source, exactly like the G2DM trainer.
    Balanced,
}

/// Cycles through a shuffled index set, reshuffling when exhausted.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize) -> Cycler {
        Cycler { order: (0..n).collect(), pos: n }
    }

    fn reset(&mut self, rng: &mut StreamRng) {
        rng::shuffle(&mut self.order, rng);
        self.pos = 0;
    }

    fn take(&mut self, m: usize, rng: &mut StreamRng) -> Vec<usize> {
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            if self.pos == self.order.len() {
                self.reset(rng);
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn check_sources(sources: &[SourceData], cfg: &TrainConfig, unseen: Option<&DomainSample>) -> Result<(usize, usize)> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(argument("no source domains"));
    }
    let dim = sources[0].train.dim();
    let mut classes = 0;
    for (k, s) in sources.iter().enumerate() {
        if s.train.is_empty() || s.validation.is_empty() {
            return Err(argument(format!("source {k} has an empty train or validation split")));
        }
        for part in [&s.train, &s.validation] {
            if part.dim() != dim {
                return Err(dimension(format!("source {k} has {} features, source 0 has {dim}", part.dim())));
            }
            classes = part.labels.iter().fold(classes, |c, y| c.max(y + 1));
        }
    }
    if let Some(u) = unseen {
        if u.dim() != dim {
            return Err(dimension(format!("unseen domain has {} features, sources have {dim}", u.dim())));
        }
    }
    Ok((dim, classes.max(2)))
}

fn evaluate(
    bundle: &ModelBundle,
    sources: &[SourceData],
    unseen: Option<&DomainSample>,
) -> Result<(Vec<f64>, Option<f64>)> {
    let val = sources.iter().map(|s| bundle.accuracy(&s.validation)).collect::<Result<Vec<_>>>()?;
    let unseen_acc = unseen.map(|u| bundle.accuracy(u)).transpose()?;
    Ok((val, unseen_acc))
}

/// Train encoder, classifier and one discriminator per source with the
/// alternating scheme described at the module level.
pub fn train_g2dm(sources: &[SourceData], cfg: &TrainConfig, unseen: Option<&DomainSample>) -> Result<TrainOutcome> {
    train_g2dm_observed(sources, cfg, unseen, &mut |_, _| {})
}

/// [`train_g2dm`] with a callback after every epoch.
pub fn train_g2dm_observed(
    sources: &[SourceData],
    cfg: &TrainConfig,
    unseen: Option<&DomainSample>,
    observer: &mut dyn FnMut(&EpochRecord, &ModelBundle),
) -> Result<TrainOutcome> {
    let (dim, classes) = check_sources(sources, cfg, unseen)?;
    if sources.len() < 2 {
        return Err(argument(format!("G2DM needs at least 2 source domains, got {}", sources.len())));
    }
    let ns = sources.len();
    let arch = Architecture { input_dim: dim, num_classes: classes, num_domains: ns, model: cfg.model.clone() };
    let mut bundle = ModelBundle::new(arch, cfg.seed)?;
    let sgd = Sgd::new(cfg.momentum, cfg.weight_decay)?;
    let mut task_state = OptimState::new(cfg.lr_task);
    let mut disc_state = OptimState::new(cfg.lr_disc);
    let obj = EncoderObjective {
        alpha: cfg.alpha,
        aggregation: cfg.aggregation,
        nadir_slack: cfg.nadir_slack,
        label_smoothing: cfg.label_smoothing,
    };

    let m = cfg.batch_per_domain;
    let trains: Vec<&DomainSample> = sources.iter().map(|s| &s.train).collect();
    let vals: Vec<&DomainSample> = sources.iter().map(|s| &s.validation).collect();
    let mut cyclers: Vec<Cycler> = trains.iter().map(|s| Cycler::new(s.len())).collect();
    let iters = trains.iter().map(|s| s.len()).max().unwrap_or(0).div_ceil(m);
    let mut rng = rng::stream_rng(cfg.seed, stream::BATCHES);
    let mut history = MetricHistory::default();
    let mut t: i64 = 0;

    for epoch in 0..cfg.epochs {
        for c in &mut cyclers {
            c.reset(&mut rng);
        }
        let mut task_sum = 0.0;
        let mut disc_sum = alloc::vec![0.0; ns];
        let mut lr_task = task_state.lr;
        for _ in 0..iters {
            let idx: Vec<Vec<usize>> = cyclers.iter_mut().map(|c| c.take(m, &mut rng)).collect();
            let batch = SourceBatch::gather(&trains, &idx)?;
            lr_task = warmup_lr(t, cfg.warmup_iters, task_state.lr, cfg.warmup_threshold)?;

            let lr_disc = disc_state.lr;
            let d = discriminator_update(&mut bundle, &mut disc_state, &sgd, &batch, lr_disc)?;
            for w in d.warnings {
                if !history.warnings.contains(&w) {
                    history.warnings.push(w);
                }
            }
            for (acc, l) in disc_sum.iter_mut().zip(&d.losses) {
                *acc += l;
            }
            let (enc_grads, _) = encoder_gradient(&bundle, &batch, &obj)?;
            task_sum += classifier_update(&mut bundle, &mut task_state, &sgd, &batch, cfg.label_smoothing, lr_task)?;
            sgd.step(&mut bundle.params, &enc_grads, &mut task_state, lr_task)?;
            t += 1;
        }
        let train_task_loss = task_sum / iters as f64;
        let (source_val_acc, unseen_acc) = evaluate(&bundle, sources, unseen)?;
        let record = EpochRecord {
            epoch,
            train_task_loss,
            source_val_acc,
            disc_losses: disc_sum.iter().map(|s| s / iters as f64).collect(),
            disc_val_acc: Some(discriminator_accuracy(&bundle, &vals)?),
            unseen_acc,
            lr_task,
            lr_disc: disc_state.lr,
        };
        plateau_decay(&mut task_state, train_task_loss, cfg.patience, cfg.decay_factor)?;
        observer(&record, &bundle);
        history.push(record);
    }
    Ok(TrainOutcome { bundle, history })
}

/// Train encoder and classifier on the task loss alone.
pub fn train_erm(
    sources: &[SourceData],
    cfg: &TrainConfig,
    unseen: Option<&DomainSample>,
    sampling: ErmSampling,
) -> Result<TrainOutcome> {
    train_erm_observed(sources, cfg, unseen, sampling, &mut |_, _| {})
}

/// [`train_erm`] with a callback after every epoch.
pub fn train_erm_observed(
    sources: &[SourceData],
    cfg: &TrainConfig,
    unseen: Option<&DomainSample>,
    sampling: ErmSampling,
    observer: &mut dyn FnMut(&EpochRecord, &ModelBundle),
) -> Result<TrainOutcome> {
    let (dim, classes) = check_sources(sources, cfg, unseen)?;
    let arch = Architecture { input_dim: dim, num_classes: classes, num_domains: 0, model: cfg.model.clone() };
    let mut bundle = ModelBundle::new(arch, cfg.seed)?;
    let sgd = Sgd::new(cfg.momentum, cfg.weight_decay)?;
    let mut state = OptimState::new(cfg.lr_task);
    let m = cfg.batch_per_domain;
    let trains: Vec<&DomainSample> = sources.iter().map(|s| &s.train).collect();

    // pooled sampling addresses rows as (source, row) pairs
    let pooled: Vec<(usize, usize)> =
        trains.iter().enumerate().flat_map(|(k, s)| (0..s.len()).map(move |i| (k, i))).collect();
    let mut cyclers: Vec<Cycler> = match sampling {
        ErmSampling::Balanced => trains.iter().map(|s| Cycler::new(s.len())).collect(),
        ErmSampling::Pooled => alloc::vec![Cycler::new(pooled.len())],
    };
    let iters = match sampling {
        ErmSampling::Balanced => trains.iter().map(|s| s.len()).max().unwrap_or(0).div_ceil(m),
        ErmSampling::Pooled => pooled.len().div_ceil(m * trains.len()),
    };
    let loss_kind = if cfg.label_smoothing == 0.0 {
        LossKind::CrossEntropy
    } else {
        LossKind::SmoothedCrossEntropy { smoothing: cfg.label_smoothing }
    };
    let mut rng = rng::stream_rng(cfg.seed, stream::BATCHES);
    let mut history = MetricHistory::default();
    let mut t: i64 = 0;

    for epoch in 0..cfg.epochs {
        for c in &mut cyclers {
            c.reset(&mut rng);
        }
        let mut task_sum = 0.0;
        let mut lr = state.lr;
        for _ in 0..iters {
            let idx: Vec<Vec<usize>> = match sampling {
                ErmSampling::Balanced => cyclers.iter_mut().map(|c| c.take(m, &mut rng)).collect(),
                ErmSampling::Pooled => {
                    let mut per = alloc::vec![Vec::new(); trains.len()];
                    for p in cyclers[0].take(m * trains.len(), &mut rng) {
                        let (k, i) = pooled[p];
                        per[k].push(i);
                    }
                    per
                }
            };
            let batch = SourceBatch::gather(&trains, &idx)?;
            lr = warmup_lr(t, cfg.warmup_iters, state.lr, cfg.warmup_threshold)?;
            let (loss, grads) = {
                let mut tape = Tape::new(&bundle.params);
                let x = tape.constant(batch.features.clone())?;
                let z = bundle.encode(&mut tape, x, Mode::Trainable)?;
                let logits = bundle.classify(&mut tape, z, Mode::Trainable)?;
                let l = tape.loss(logits, Target::Classes(&batch.labels), loss_kind)?;
                (tape.value(l).item(), tape.backward(l)?)
            };
            sgd.step(&mut bundle.params, &grads, &mut state, lr)?;
            task_sum += loss;
            t += 1;
        }
        let train_task_loss = task_sum / iters as f64;
        let (source_val_acc, unseen_acc) = evaluate(&bundle, sources, unseen)?;
        let record = EpochRecord {
            epoch,
            train_task_loss,
            source_val_acc,
            disc_losses: Vec::new(),
            disc_val_acc: None,
            unseen_acc,
            lr_task: lr,
            lr_disc: 0.0,
        };
        plateau_decay(&mut state, train_task_loss, cfg.patience, cfg.decay_factor)?;
        observer(&record, &bundle);
        history.push(record);
    }
    Ok(TrainOutcome { bundle, history })
}
