//! Reverse-mode gradients against central finite differences.

use g2dm_core::engine::{LossKind, ParamId, ParamStore, Tape, Target, Tensor, Var};
use g2dm_core::models::{smoothed_cross_entropy, Architecture, ModelBundle, ModelConfig, Mode};
use g2dm_core::rng::{self, standard_normal, StreamRng};
use g2dm_core::math::softplus;
use g2dm_core::training::{confusion_loss, encoder_gradient, nadir, Aggregation, EncoderObjective, SourceBatch};
use g2dm_core::domains::DomainSample;
use rand::Rng;

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
// entries smaller than this are compared on an absolute scale
const SCALE_FLOOR: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(SCALE_FLOOR)
}

/// Central differences of `f` with respect to every entry of every parameter.
fn finite_differences(store: &ParamStore, ids: &[ParamId], f: &dyn Fn(&ParamStore) -> f64) -> Vec<Vec<f64>> {
    let mut work = store.clone();
    ids.iter()
        .map(|&id| {
            (0..store.value(id).len())
                .map(|j| {
                    let orig = work.value(id).data()[j];
                    work.value_mut(id).data_mut()[j] = orig + STEP;
                    let up = f(&work);
                    work.value_mut(id).data_mut()[j] = orig - STEP;
                    let down = f(&work);
                    work.value_mut(id).data_mut()[j] = orig;
                    (up - down) / (2.0 * STEP)
                })
                .collect()
        })
        .collect()
}

fn normal_tensor(rows: usize, cols: usize, scale: f64, rng: &mut StreamRng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * standard_normal(rng)).collect()).unwrap()
}

struct RandomNet {
    store: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
    relu: bool,
    x: Tensor,
    loss: u8,
    labels: Vec<usize>,
    binary: Vec<f64>,
}

impl RandomNet {
    fn draw(rng: &mut StreamRng) -> RandomNet {
        let depth = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            widths.push(rng.random_range(1..=6));
        }
        let loss = rng.random_range(0..4u8);
        if loss < 2 {
            *widths.last_mut().unwrap() = rng.random_range(2..=5);
        } else if loss == 2 {
            *widths.last_mut().unwrap() = 1;
        }
        let mut store = ParamStore::new();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let wt = store.add(format!("w{i}"), normal_tensor(w[0], w[1], 0.8, rng), false);
                let b = store.add(format!("b{i}"), normal_tensor(1, w[1], 0.3, rng), false);
                (wt, b)
            })
            .collect();
        let n = rng.random_range(1..=4);
        let classes = *widths.last().unwrap();
        RandomNet {
            store,
            layers,
            relu: rng.random_bool(0.5),
            x: normal_tensor(n, widths[0], 1.0, rng),
            loss,
            labels: (0..n).map(|_| rng.random_range(0..classes)).collect(),
            binary: (0..n).map(|_| rng.random_range(0..2) as f64).collect(),
        }
    }

    /// Forward pass; also returns every pre-activation.
    fn build(&self, tape: &mut Tape<'_>) -> (Var, Vec<Var>) {
        let mut h = tape.constant(self.x.clone()).unwrap();
        let mut pre = Vec::new();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let w = tape.param(*w).unwrap();
            let b = tape.param(*b).unwrap();
            let m = tape.matmul(h, w).unwrap();
            h = tape.add_bias(m, b).unwrap();
            if i + 1 < self.layers.len() {
                pre.push(h);
                h = if self.relu { tape.relu(h).unwrap() } else { tape.tanh(h).unwrap() };
            }
        }
        let loss = match self.loss {
            0 => tape.loss(h, Target::Classes(&self.labels), LossKind::CrossEntropy).unwrap(),
            1 => tape.loss(h, Target::Classes(&self.labels), LossKind::SmoothedCrossEntropy { smoothing: 0.2 }).unwrap(),
            2 => tape.loss(h, Target::Binary(&self.binary), LossKind::BinaryCrossEntropy).unwrap(),
            _ => {
                // a scalar built from the elementwise ops
                let e = tape.exp(h).unwrap();
                let sq = tape.mul(h, h).unwrap();
                let s = tape.sub(e, sq).unwrap();
                let shifted = tape.shift(e, 1.0).unwrap();
                let lg = tape.log(shifted).unwrap();
                let t = tape.add(s, lg).unwrap();
                let m = tape.mean(t).unwrap();
                let mx = tape.max(lg).unwrap();
                let mx = tape.scale(mx, 0.5).unwrap();
                tape.add(m, mx).unwrap()
            }
        };
        (loss, pre)
    }

    fn value(&self, store: &ParamStore) -> f64 {
        let mut tape = Tape::new(store);
        let (l, _) = self.build(&mut tape);
        tape.value(l).item()
    }

    /// Smallest distance of a ReLU input (or of a max competitor) from a kink.
    fn kink_margin(&self) -> f64 {
        let mut tape = Tape::new(&self.store);
        let (_, pre) = self.build(&mut tape);
        if !self.relu {
            return f64::INFINITY;
        }
        pre.iter().flat_map(|v| tape.value(*v).data().iter().map(|x| x.abs()).collect::<Vec<_>>()).fold(f64::INFINITY, f64::min)
    }
}

#[test]
fn hundred_random_networks_match_finite_differences() {
    let mut rng = rng::seeded(20);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 100 {
        let net = RandomNet::draw(&mut rng);
        // the oracle only holds away from non-differentiable points
        if net.kink_margin() < 1e-3 {
            continue;
        }
        let mut tape = Tape::new(&net.store);
        let (l, _) = net.build(&mut tape);
        let grads = tape.backward(l).unwrap();
        let ids: Vec<ParamId> = net.layers.iter().flat_map(|(w, b)| [*w, *b]).collect();
        let fd = finite_differences(&net.store, &ids, &|s| net.value(s));
        for (id, numeric) in ids.iter().zip(&fd) {
            let analytic = grads.get(*id).expect("every parameter reaches the loss");
            for (a, f) in analytic.data().iter().zip(numeric) {
                worst = worst.max(rel_err(*a, *f));
            }
        }
        checked += 1;
    }
    assert!(worst <= REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let arch = Architecture {
        input_dim: 3,
        num_classes: 4,
        num_domains: 0,
        model: ModelConfig { encoder_widths: vec![5], classifier_hidden: vec![3], activation: g2dm_core::models::Activation::Tanh, ..ModelConfig::default() },
    };
    let bundle = ModelBundle::new(arch, 11).unwrap();
    let mut rng = rng::seeded(3);
    let x = normal_tensor(6, 3, 1.0, &mut rng);
    let y = vec![0, 1, 2, 3, 1, 2];
    let z = bundle.encode_tensor(&x).unwrap();
    let loss = |store: &ParamStore| {
        let logits = {
            let mut tape = Tape::new(store);
            let zv = tape.constant(z.clone()).unwrap();
            let out = bundle.classify(&mut tape, zv, Mode::Trainable).unwrap();
            tape.value(out).clone()
        };
        (0..6).map(|i| smoothed_cross_entropy(logits.row(i), y[i], 0.1).unwrap()).sum::<f64>() / 6.0
    };
    let mut tape = Tape::new(&bundle.params);
    let zv = tape.constant(z.clone()).unwrap();
    let out = bundle.classify(&mut tape, zv, Mode::Trainable).unwrap();
    let l = tape.loss(out, Target::Classes(&y), LossKind::SmoothedCrossEntropy { smoothing: 0.1 }).unwrap();
    let grads = tape.backward(l).unwrap();
    let ids = bundle.classifier_params();
    assert_eq!(grads.len(), ids.len());
    let fd = finite_differences(&bundle.params, &ids, &loss);
    for (id, numeric) in ids.iter().zip(&fd) {
        for (a, f) in grads.get(*id).unwrap().data().iter().zip(numeric) {
            assert!(rel_err(*a, *f) <= REL_TOL, "{a} vs {f}");
        }
    }
}

fn batch(ns: usize, m: usize, dim: usize, rng: &mut StreamRng) -> SourceBatch {
    let samples: Vec<DomainSample> = (0..ns)
        .map(|k| {
            let mut x = normal_tensor(m, dim, 1.0, rng);
            for v in x.data_mut() {
                *v += k as f64;
            }
            DomainSample::new(k, x, (0..m).map(|i| i % 2).collect()).unwrap()
        })
        .collect();
    let refs: Vec<&DomainSample> = samples.iter().collect();
    let idx: Vec<Vec<usize>> = (0..ns).map(|_| (0..m).collect()).collect();
    SourceBatch::gather(&refs, &idx).unwrap()
}

#[test]
fn encoder_objective_gradient_matches_finite_differences() {
    for aggregation in [Aggregation::Sum, Aggregation::Hypervolume] {
        let arch = Architecture {
            input_dim: 2,
            num_classes: 2,
            num_domains: 3,
            model: ModelConfig {
                encoder_widths: vec![4, 3],
                discriminator_hidden: vec![4],
                projection_size: 5,
                activation: g2dm_core::models::Activation::Tanh,
                ..ModelConfig::default()
            },
        };
        let bundle = ModelBundle::new(arch, 4).unwrap();
        let b = batch(3, 4, 2, &mut rng::seeded(8));
        let obj = EncoderObjective { alpha: 0.6, aggregation, nadir_slack: 2.5, label_smoothing: 0.0 };
        let (grads, _) = encoder_gradient(&bundle, &b, &obj).unwrap();
        let ids = bundle.encoder_params();
        assert_eq!(grads.len(), ids.len(), "only encoder parameters receive gradients");
        // per-discriminator losses and task loss by plain forward evaluation
        let terms = |store: &ParamStore| -> (f64, Vec<f64>) {
            let mut probe = bundle.clone();
            probe.params = store.clone();
            let out = probe.forward(&b.features).unwrap();
            let n = b.len() as f64;
            let task = (0..b.len()).map(|i| smoothed_cross_entropy(out.class_logits.row(i), b.labels[i], 0.0).unwrap()).sum::<f64>() / n;
            let disc = (0..3)
                .map(|k| {
                    out.domain_logits[k].data().iter().zip(&b.domains)
                        .map(|(s, d)| if *d == k { softplus(-s) } else { softplus(*s) })
                        .sum::<f64>() / n
                })
                .collect();
            (task, disc)
        };
        let (_, l0) = terms(&bundle.params);
        let eta = nadir(&l0.iter().map(|l| confusion_loss(*l)).collect::<Vec<_>>(), 2.5);
        let value = |store: &ParamStore| {
            let (task, disc) = terms(store);
            let adv = match aggregation {
                Aggregation::Sum => -disc.iter().sum::<f64>(),
                // the nadir is a constant of the analytic gradient
                Aggregation::Hypervolume => -disc.iter().map(|l| (eta - confusion_loss(*l)).ln()).sum::<f64>(),
            };
            0.6 * task + 0.4 * adv
        };
        let fd = finite_differences(&bundle.params, &ids, &value);
        let (mut dot, mut na, mut nf) = (0.0, 0.0, 0.0);
        for (id, numeric) in ids.iter().zip(&fd) {
            for (a, f) in grads.get(*id).unwrap().data().iter().zip(numeric) {
                assert!(rel_err(*a, *f) <= REL_TOL, "{aggregation:?}: {a} vs {f}");
                dot += a * f;
                na += a * a;
                nf += f * f;
            }
        }
        assert!(dot / (na.sqrt() * nf.sqrt()) > 1.0 - 1e-9);
    }
}
