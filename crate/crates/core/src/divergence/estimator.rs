use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{LossKind, OptimState, ParamStore, Sgd, Tape, Target, Tensor};
use crate::error::{argument, dimension, Result};
use crate::math;
use crate::models::{Activation, Mlp, Mode};
use crate::rng::{self, stream, StreamRng};

/// Settings of the domain classifier behind [`proxy_a_distance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub folds: usize,
    /// Rows kept per sample. Both samples are subsampled to the smaller of
    /// this and their sizes.
    pub cap: usize,
    /// Hidden widths; empty gives logistic regression.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Expected spread of estimates between identically distributed samples.
    pub noise_tolerance: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            folds: 5,
            cap: 500,
            hidden: vec![16],
            epochs: 30,
            batch: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
            noise_tolerance: 0.15,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(argument(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.cap < self.folds || self.epochs == 0 || self.batch == 0 {
            return Err(argument("cap must cover the folds; epochs and batch must be positive"));
        }
        if !(self.lr > 0.0) || !(self.noise_tolerance >= 0.0) {
            return Err(argument("estimator lr must be positive and noise tolerance non-negative"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> EstimatorConfig {
        EstimatorConfig { seed, ..self.clone() }
    }
}

/// A small standardized classifier trained with the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    params: ParamStore,
    mlp: Mlp,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Probe {
    /// Binary classifier with a single logit output.
    pub fn fit_binary(x: &Tensor, y: &[f64], cfg: &EstimatorConfig, rng: &mut StreamRng) -> Result<Probe> {
        Probe::fit(x, Target::Binary(y), LossKind::BinaryCrossEntropy, 1, cfg, rng)
    }

    /// Multi-class classifier with `classes` logits.
    pub fn fit_classes(
        x: &Tensor,
        y: &[usize],
        classes: usize,
        cfg: &EstimatorConfig,
        rng: &mut StreamRng,
    ) -> Result<Probe> {
        Probe::fit(x, Target::Classes(y), LossKind::CrossEntropy, classes, cfg, rng)
    }

    fn fit(
        x: &Tensor,
        target: Target<'_>,
        kind: LossKind,
        outputs: usize,
        cfg: &EstimatorConfig,
        rng: &mut StreamRng,
    ) -> Result<Probe> {
        let (n, dim) = (x.rows(), x.cols());
        let len = match target {
            Target::Binary(y) => y.len(),
            Target::Classes(y) => y.len(),
        };
        if n == 0 || len != n {
            return Err(argument(format!("{n} rows but {len} targets")));
        }
        let (mean, scale) = standardizer(x);
        let xs = standardize(x, &mean, &scale)?;

        let mut params = ParamStore::new();
        let mut widths = vec![dim];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(outputs);
        let mlp = Mlp::init(&mut params, "probe", &widths, Activation::Relu, false, rng)?;
        let sgd = Sgd::new(cfg.momentum, cfg.weight_decay)?;
        let mut state = OptimState::new(cfg.lr);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            rng::shuffle(&mut order, rng);
            for chunk in order.chunks(cfg.batch) {
                let xb = xs.select_rows(chunk)?;
                let grads = {
                    let mut tape = Tape::new(&params);
                    let xv = tape.constant(xb)?;
                    let out = mlp.forward(&mut tape, xv, Mode::Trainable)?;
                    let l = match target {
                        Target::Binary(y) => {
                            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                            tape.loss(out, Target::Binary(&yb), kind)?
                        }
                        Target::Classes(y) => {
                            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                            tape.loss(out, Target::Classes(&yb), kind)?
                        }
                    };
                    tape.backward(l)?
                };
                sgd.step(&mut params, &grads, &mut state, cfg.lr)?;
            }
        }
        Ok(Probe { params, mlp, mean, scale })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let xs = standardize(x, &self.mean, &self.scale)?;
        let mut tape = Tape::new(&self.params);
        let xv = tape.constant(xs)?;
        let out = self.mlp.forward(&mut tape, xv, Mode::Detached)?;
        Ok(tape.value(out).clone())
    }

    /// Class decisions: `logit > 0` for binary probes, argmax otherwise.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        if logits.cols() == 1 {
            return Ok(logits.data().iter().map(|s| (*s > 0.0) as usize).collect());
        }
        Ok(crate::models::argmax_rows(&logits))
    }
}

fn standardizer(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    let scale = var.into_iter().map(|v| if v > 1e-24 { math::sqrt(v) } else { 1.0 }).collect();
    (mean, scale)
}

fn standardize(x: &Tensor, mean: &[f64], scale: &[f64]) -> Result<Tensor> {
    if x.cols() != mean.len() {
        return Err(dimension(format!("probe expects {} features, got {}", mean.len(), x.cols())));
    }
    let mut out = x.clone();
    let d = mean.len();
    for (j, v) in out.data_mut().iter_mut().enumerate() {
        let c = j % d;
        *v = (*v - mean[c]) / scale[c];
    }
    Ok(out)
}

/// Result of one proxy A-distance estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PadEstimate {
    pub distance: f64,
    /// Cross-validated domain classification error.
    pub error: f64,
    /// Whether `2(1 − 2ε̂)` was negative and clamped to zero.
    pub clamped: bool,
}

fn subsample(x: &Tensor, cap: usize, rng: &mut StreamRng) -> Result<Tensor> {
    if x.rows() <= cap {
        return Ok(x.clone());
    }
    let mut idx = rng::permutation(x.rows(), rng);
    idx.truncate(cap);
    x.select_rows(&idx)
}

/// Estimate the divergence between the samples `p` and `q` (rows are examples).
pub fn proxy_a_distance(p: &Tensor, q: &Tensor, cfg: &EstimatorConfig) -> Result<PadEstimate> {
    cfg.validate()?;
    if p.cols() != q.cols() {
        return Err(dimension(format!("samples have {} and {} features", p.cols(), q.cols())));
    }
    for (name, s) in [("first", p), ("second", q)] {
        if s.rows() < cfg.folds {
            return Err(argument(format!("{name} sample has {} rows, fewer than {} folds", s.rows(), cfg.folds)));
        }
    }
    let mut rng = rng::stream_rng(cfg.seed, stream::ESTIMATOR);
    // equal sizes keep the majority-class error at one half
    let size = cfg.cap.min(p.rows()).min(q.rows());
    let p = subsample(p, size, &mut rng)?;
    let q = subsample(q, size, &mut rng)?;
    let x = Tensor::vstack(&[&p, &q])?;
    let y: Vec<f64> = (0..x.rows()).map(|i| if i < p.rows() { 1.0 } else { 0.0 }).collect();

    // stratified folds: each sample is dealt round-robin after a shuffle
    let mut fold = vec![0usize; x.rows()];
    for (offset, n) in [(0, p.rows()), (p.rows(), q.rows())] {
        for (pos, i) in rng::permutation(n, &mut rng).into_iter().enumerate() {
            fold[offset + i] = pos % cfg.folds;
        }
    }
    let mut errors = 0usize;
    for f in 0..cfg.folds {
        let train: Vec<usize> = (0..x.rows()).filter(|i| fold[*i] != f).collect();
        let test: Vec<usize> = (0..x.rows()).filter(|i| fold[*i] == f).collect();
        let ytrain: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let probe = Probe::fit_binary(&x.select_rows(&train)?, &ytrain, cfg, &mut rng)?;
        let pred = probe.predict(&x.select_rows(&test)?)?;
        errors += test.iter().zip(&pred).filter(|(i, p)| (y[**i] > 0.5) != (**p == 1)).count();
    }
    let error = errors as f64 / x.rows() as f64;
    let raw = 2.0 * (1.0 - 2.0 * error);
    Ok(PadEstimate { distance: raw.max(0.0), error, clamped: raw < 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_rows_for_folds() {
        let p = Tensor::zeros(&[3, 2]);
        let q = Tensor::zeros(&[10, 2]);
        assert!(proxy_a_distance(&p, &q, &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn chance_error_maps_to_zero() {
        // identical constant samples leave the probe unable to beat chance
        let p = Tensor::zeros(&[20, 1]);
        let est = proxy_a_distance(&p, &p, &EstimatorConfig::default()).unwrap();
        assert!(est.error >= 0.5);
        assert_eq!(est.distance, 0.0);
    }
}
