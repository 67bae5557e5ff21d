use g2dm_core::domains::{sample_examples, DomainSample, DomainSpec, Family};
use g2dm_core::engine::{LossKind, OptimState, ParamId, Sgd, Tape, Target};
use g2dm_core::models::{ova_labels, Architecture, Mode, ModelBundle, ModelConfig};
use g2dm_core::rng;
use g2dm_core::training::*;
use g2dm_core::Error;

fn moons(id: usize, deg: f64, n: usize, seed: u64) -> DomainSample {
    let ex = sample_examples(&DomainSpec::rotated_moons(id, deg), n, &mut rng::seeded(seed)).unwrap();
    DomainSample::from_examples(id, &ex).unwrap()
}

fn sources(degrees: &[f64], n: usize) -> Vec<SourceData> {
    degrees
        .iter()
        .enumerate()
        .map(|(i, d)| SourceData { train: moons(i, *d, n, 10 + i as u64), validation: moons(i, *d, n / 4, 50 + i as u64) })
        .collect()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_per_domain: 16,
        warmup_iters: 5,
        seed,
        model: ModelConfig { encoder_widths: vec![16, 8], discriminator_hidden: vec![8], projection_size: 16, ..ModelConfig::default() },
        ..TrainConfig::default()
    }
}

fn bundle(ns: usize, seed: u64) -> ModelBundle {
    let arch = Architecture { input_dim: 2, num_classes: 2, num_domains: ns, model: small_config(seed).model };
    ModelBundle::new(arch, seed).unwrap()
}

fn batch_of(data: &[SourceData], m: usize) -> SourceBatch {
    let refs: Vec<&DomainSample> = data.iter().map(|s| &s.train).collect();
    let idx: Vec<Vec<usize>> = data.iter().map(|_| (0..m).collect()).collect();
    SourceBatch::gather(&refs, &idx).unwrap()
}

fn disc_losses(b: &ModelBundle, batch: &SourceBatch) -> Vec<f64> {
    let z = b.encode_tensor(&batch.features).unwrap();
    (0..b.num_discriminators())
        .map(|k| {
            let y = ova_labels(&batch.domains, k, batch.num_domains).unwrap();
            let mut tape = Tape::new(&b.params);
            let zv = tape.constant(z.clone()).unwrap();
            let s = b.discriminate(&mut tape, k, zv, Mode::Detached).unwrap();
            let l = tape.loss(s, Target::Binary(&y), LossKind::BinaryCrossEntropy).unwrap();
            tape.value(l).item()
        })
        .collect()
}

fn task_loss(b: &ModelBundle, batch: &SourceBatch) -> f64 {
    let mut tape = Tape::new(&b.params);
    let x = tape.constant(batch.features.clone()).unwrap();
    let z = b.encode(&mut tape, x, Mode::Detached).unwrap();
    let s = b.classify(&mut tape, z, Mode::Detached).unwrap();
    let l = tape.loss(s, Target::Classes(&batch.labels), LossKind::CrossEntropy).unwrap();
    tape.value(l).item()
}

/// Parameters whose values differ between two bundles.
fn changed(a: &ModelBundle, b: &ModelBundle) -> Vec<ParamId> {
    (0..a.params.len()).map(ParamId).filter(|id| a.params.value(*id) != b.params.value(*id)).collect()
}

fn sorted(mut v: Vec<ParamId>) -> Vec<ParamId> {
    v.sort();
    v
}

const SGD: Sgd = Sgd { momentum: 0.0, weight_decay: 0.0 };

fn objective(alpha: f64) -> EncoderObjective {
    EncoderObjective { alpha, aggregation: Aggregation::Sum, nadir_slack: 2.5, label_smoothing: 0.0 }
}

#[test]
fn discriminator_step_descends_and_touches_only_discriminators() {
    let data = sources(&[0.0, 30.0, 60.0], 64);
    let batch = batch_of(&data, 16);
    let before = bundle(3, 1);
    let mut after = before.clone();
    let step = discriminator_update(&mut after, &mut OptimState::new(0.05), &SGD, &batch, 0.05).unwrap();
    assert!(step.warnings.is_empty());
    let (l0, l1) = (disc_losses(&before, &batch), disc_losses(&after, &batch));
    for k in 0..3 {
        assert!((step.losses[k] - l0[k]).abs() < 1e-12);
        assert!(l1[k] <= l0[k], "discriminator {k}: {} -> {}", l0[k], l1[k]);
    }
    let mut expected: Vec<ParamId> = (0..3).flat_map(|k| after.discriminator_params(k)).collect();
    expected.sort();
    assert_eq!(sorted(changed(&before, &after)), expected);
}

#[test]
fn zero_learning_rates_freeze_players() {
    let data = sources(&[0.0, 30.0], 64);
    let batch = batch_of(&data, 16);
    let before = bundle(2, 2);
    let mut b = before.clone();
    discriminator_update(&mut b, &mut OptimState::new(0.0), &SGD, &batch, 0.0).unwrap();
    classifier_update(&mut b, &mut OptimState::new(0.0), &SGD, &batch, 0.0, 0.0).unwrap();
    assert_eq!(b, before);
}

#[test]
fn classifier_step_touches_only_the_classifier() {
    let data = sources(&[0.0, 30.0], 64);
    let batch = batch_of(&data, 16);
    let before = bundle(2, 3);
    let mut after = before.clone();
    let loss = classifier_update(&mut after, &mut OptimState::new(0.05), &SGD, &batch, 0.1, 0.05).unwrap();
    assert!(loss.is_finite());
    assert_eq!(sorted(changed(&before, &after)), sorted(after.classifier_params()));
}

#[test]
fn classifier_fits_a_single_class_batch() {
    let data = sources(&[0.0, 30.0], 64);
    let mut batch = batch_of(&data, 16);
    batch.labels.iter_mut().for_each(|y| *y = 1);
    let mut b = bundle(2, 4);
    let mut state = OptimState::new(0.1);
    let sgd = Sgd::new(0.9, 0.0).unwrap();
    for _ in 0..200 {
        classifier_update(&mut b, &mut state, &sgd, &batch, 0.0, 0.1).unwrap();
    }
    assert!(task_loss(&b, &batch) < 2f64.ln() / 4.0);
}

#[test]
fn encoder_step_touches_only_the_encoder_and_ascends_domain_losses() {
    let data = sources(&[0.0, 45.0, 90.0], 64);
    let batch = batch_of(&data, 16);
    let mut before = bundle(3, 5);
    // give the discriminators something to lose first
    let mut ds = OptimState::new(0.1);
    for _ in 0..20 {
        discriminator_update(&mut before, &mut ds, &SGD, &batch, 0.1).unwrap();
    }
    let mut after = before.clone();
    encoder_update(&mut after, &mut OptimState::new(0.01), &SGD, &batch, &objective(0.0), 0.01).unwrap();
    assert_eq!(sorted(changed(&before, &after)), sorted(after.encoder_params()));
    let s0: f64 = disc_losses(&before, &batch).iter().sum();
    let s1: f64 = disc_losses(&after, &batch).iter().sum();
    assert!(s1 >= s0, "{s0} -> {s1}");
}

#[test]
fn alpha_one_is_a_plain_task_gradient() {
    let data = sources(&[0.0, 30.0], 64);
    let batch = batch_of(&data, 16);
    let b = bundle(2, 6);
    let (g, losses) = encoder_gradient(&b, &batch, &objective(1.0)).unwrap();
    assert!(losses.adversarial.is_none());
    let mut tape = Tape::new(&b.params);
    let x = tape.constant(batch.features.clone()).unwrap();
    let z = b.encode(&mut tape, x, Mode::Trainable).unwrap();
    let s = b.classify(&mut tape, z, Mode::Detached).unwrap();
    let l = tape.loss(s, Target::Classes(&batch.labels), LossKind::CrossEntropy).unwrap();
    assert_eq!(g, tape.backward(l).unwrap());
}

#[test]
fn alpha_zero_ignores_the_task() {
    let data = sources(&[0.0, 30.0], 64);
    let batch = batch_of(&data, 16);
    let b = bundle(2, 7);
    let (g, losses) = encoder_gradient(&b, &batch, &objective(0.0)).unwrap();
    assert!(losses.task.is_none());
    let mut flipped = batch.clone();
    flipped.labels.iter_mut().for_each(|y| *y = 1 - *y);
    assert_eq!(g, encoder_gradient(&b, &flipped, &objective(0.0)).unwrap().0);
}

#[test]
fn unbalanced_batches_are_rejected() {
    let data = sources(&[0.0, 30.0], 64);
    let refs: Vec<&DomainSample> = data.iter().map(|s| &s.train).collect();
    let batch = SourceBatch::gather(&refs, &[(0..16).collect(), (0..8).collect()]).unwrap();
    let mut b = bundle(2, 8);
    let err = discriminator_update(&mut b, &mut OptimState::new(0.1), &SGD, &batch, 0.1).unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
    assert!(matches!(encoder_gradient(&b, &batch, &objective(0.5)), Err(Error::Argument(_))));
}

#[test]
fn single_source_warns() {
    let data = sources(&[0.0], 64);
    let batch = batch_of(&data, 16);
    let mut b = bundle(1, 9);
    let step = discriminator_update(&mut b, &mut OptimState::new(0.1), &SGD, &batch, 0.1).unwrap();
    assert_eq!(step.warnings.len(), 1);
    assert!(train_g2dm(&data, &small_config(1), None).is_err());
}

#[test]
fn sum_and_hypervolume_gradients_align_for_equal_losses() {
    let data = sources(&[0.0, 30.0], 64);
    let batch = batch_of(&data, 16);
    let mut b = bundle(2, 10);
    // mirror discriminator 0 into 1 with a negated output layer: with two
    // sources the one-vs-all targets are complementary, so the losses match
    let (p0, p1) = (b.discriminator_params(0), b.discriminator_params(1));
    let last = p0.len() - 2;
    for (i, (a, c)) in p0.iter().zip(&p1).enumerate() {
        let mut v = b.params.value(*a).clone();
        if i >= last {
            v.data_mut().iter_mut().for_each(|x| *x = -*x);
        }
        *b.params.value_mut(*c) = v;
    }
    let proj = b.projection_params();
    let pv = b.params.value(proj[0]).clone();
    *b.params.value_mut(proj[1]) = pv;
    let l = disc_losses(&b, &batch);
    assert!((l[0] - l[1]).abs() < 1e-12);

    let sum = encoder_gradient(&b, &batch, &objective(0.0)).unwrap().0;
    let hv_obj = EncoderObjective { aggregation: Aggregation::Hypervolume, ..objective(0.0) };
    let hv = encoder_gradient(&b, &batch, &hv_obj).unwrap().0;
    let flat = |g: &g2dm_core::engine::Gradients| g.iter().flat_map(|(_, t)| t.data().to_vec()).collect::<Vec<f64>>();
    let (a, c) = (flat(&sum), flat(&hv));
    let dot: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(dot > 0.0);
    assert!((dot / (na * nc) - 1.0).abs() < 1e-9);
}

#[test]
fn training_is_deterministic() {
    let data = sources(&[0.0, 15.0, 30.0], 96);
    let a = train_g2dm(&data, &small_config(3), None).unwrap();
    let b = train_g2dm(&data, &small_config(3), None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.history.len(), 4);
}

#[test]
fn unseen_data_only_changes_logs() {
    let data = sources(&[0.0, 15.0, 30.0], 96);
    let unseen = moons(3, 45.0, 100, 99);
    let with = train_g2dm(&data, &small_config(4), Some(&unseen)).unwrap();
    let without = train_g2dm(&data, &small_config(4), None).unwrap();
    assert_eq!(with.bundle, without.bundle);
    assert!(with.history.records.iter().all(|r| r.unseen_acc.is_some()));
    assert!(without.history.records.iter().all(|r| r.unseen_acc.is_none()));
}

#[test]
fn projections_stay_at_initialization() {
    let data = sources(&[0.0, 15.0, 30.0], 96);
    let out = train_g2dm(&data, &small_config(5), None).unwrap();
    let fresh = ModelBundle::new(out.bundle.arch.clone(), 5).unwrap();
    for id in fresh.projection_params() {
        assert_eq!(out.bundle.params.value(id), fresh.params.value(id));
    }
}

#[test]
fn erm_matches_g2dm_without_adversary() {
    let data = sources(&[0.0, 15.0, 30.0], 96);
    let cfg = TrainConfig { alpha: 1.0, lr_disc: 0.0, weight_decay: 1e-3, ..small_config(6) };
    let g = train_g2dm(&data, &cfg, None).unwrap();
    let e = train_erm(&data, &cfg, None, ErmSampling::Balanced).unwrap();
    for (ig, ie) in g.bundle.encoder_params().iter().zip(e.bundle.encoder_params()) {
        assert_eq!(g.bundle.params.value(*ig), e.bundle.params.value(ie));
    }
    for (ig, ie) in g.bundle.classifier_params().iter().zip(e.bundle.classifier_params()) {
        assert_eq!(g.bundle.params.value(*ig), e.bundle.params.value(ie));
    }
    let losses = |h: &MetricHistory| h.records.iter().map(|r| r.train_task_loss).collect::<Vec<_>>();
    assert_eq!(losses(&g.history), losses(&e.history));
}

#[test]
fn erm_ignores_alpha() {
    let data = sources(&[0.0, 30.0], 96);
    for sampling in [ErmSampling::Pooled, ErmSampling::Balanced] {
        let a = train_erm(&data, &TrainConfig { alpha: 0.1, ..small_config(7) }, None, sampling).unwrap();
        let b = train_erm(&data, &TrainConfig { alpha: 0.9, ..small_config(7) }, None, sampling).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn erm_separates_a_linear_task() {
    let spec = DomainSpec::new(0, Family::GaussianClasses { dim: 2, classes: 2, separation: 6.0 });
    let ex = sample_examples(&spec, 200, &mut rng::seeded(1)).unwrap();
    let s = DomainSample::from_examples(0, &ex).unwrap();
    let data = vec![SourceData { train: s.clone(), validation: s.clone() }];
    let out = train_erm(&data, &TrainConfig { epochs: 30, ..small_config(8) }, None, ErmSampling::Pooled).unwrap();
    assert_eq!(out.bundle.accuracy(&s).unwrap(), 1.0);
}

#[test]
fn identical_sources_keep_discriminators_at_chance() {
    let same: Vec<SourceData> = (0..3)
        .map(|i| SourceData { train: moons(i, 0.0, 300, 10 + i as u64), validation: moons(i, 0.0, 300, 50 + i as u64) })
        .collect();
    let out = train_g2dm(&same, &TrainConfig { epochs: 30, ..TrainConfig::default() }, None).unwrap();
    let acc = out.history.last().unwrap().disc_val_acc.unwrap();
    assert!((0.45..=0.55).contains(&acc), "discriminator accuracy {acc}");
}

#[test]
fn discriminators_lose_ground_over_training() {
    let mut drops = Vec::new();
    // enough data that the discriminators learn within the first epoch
    let data = sources(&[0.0, 60.0, 120.0], 1200);
    for seed in 1..=5 {
        let out = train_g2dm(&data, &TrainConfig { seed, epochs: 30, ..TrainConfig::default() }, None).unwrap();
        let r = &out.history.records;
        drops.push(r[0].disc_val_acc.unwrap() - r.last().unwrap().disc_val_acc.unwrap());
    }
    drops.sort_by(f64::total_cmp);
    assert!(drops[2] > 0.0, "{drops:?}");
}

#[test]
fn config_errors_are_argument_errors() {
    let data = sources(&[0.0, 30.0], 64);
    let bad = TrainConfig { alpha: 2.0, ..small_config(1) };
    assert!(matches!(train_g2dm(&data, &bad, None), Err(Error::Argument(_))));
}
