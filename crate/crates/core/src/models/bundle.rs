use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{init_projection, Activation, Mlp, Mode};
use crate::domains::DomainSample;
use crate::engine::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{argument, dimension, Result};
use crate::rng::{derive_seed, stream, stream_rng};

/// Layer widths of the three players.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden and output widths of the encoder; the last entry is `d`.
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the task classifier (empty: a single linear layer).
    pub classifier_hidden: Vec<usize>,
    /// Hidden widths of each discriminator after the projection.
    pub discriminator_hidden: Vec<usize>,
    /// Output size of the random projection; 0 feeds `z` directly.
    pub projection_size: usize,
    pub trainable_projection: bool,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_widths: vec![64, 32],
            classifier_hidden: Vec::new(),
            discriminator_hidden: vec![32, 16],
            projection_size: 64,
            trainable_projection: false,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Number of discriminators (source domains); zero for ERM.
    pub num_domains: usize,
    pub model: ModelConfig,
}

impl Architecture {
    pub fn latent_dim(&self) -> usize {
        *self.model.encoder_widths.last().unwrap_or(&self.input_dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLayer {
    pub param: ParamId,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDiscriminator {
    pub projection: Option<ProjectionLayer>,
    pub mlp: Mlp,
}

/// Parameters and layout of encoder, classifier and discriminators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub arch: Architecture,
    pub params: ParamStore,
    pub encoder: Mlp,
    pub classifier: Mlp,
    pub discriminators: Vec<DomainDiscriminator>,
}

/// Outputs of [`ModelBundle::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct BundleOutput {
    pub class_logits: Tensor,
    pub domain_logits: Vec<Tensor>,
    pub z: Tensor,
}

impl ModelBundle {
    /// Initialize all players. Each player draws from its own seeded stream,
    /// so encoder and classifier weights do not depend on the number of
    /// discriminators or on the projection size.
    pub fn new(arch: Architecture, seed: u64) -> Result<ModelBundle> {
        if arch.input_dim == 0 || arch.num_classes < 2 || arch.model.encoder_widths.is_empty() {
            return Err(argument(format!(
                "architecture needs input_dim > 0, >= 2 classes and an encoder, got {}/{}/{:?}",
                arch.input_dim, arch.num_classes, arch.model.encoder_widths
            )));
        }
        let m = &arch.model;
        let mut params = ParamStore::new();

        let mut widths = vec![arch.input_dim];
        widths.extend_from_slice(&m.encoder_widths);
        let encoder = Mlp::init(&mut params, "encoder", &widths, m.activation, true, &mut stream_rng(seed, stream::ENCODER))?;

        let d = arch.latent_dim();
        let mut widths = vec![d];
        widths.extend_from_slice(&m.classifier_hidden);
        widths.push(arch.num_classes);
        let classifier =
            Mlp::init(&mut params, "classifier", &widths, m.activation, false, &mut stream_rng(seed, stream::CLASSIFIER))?;

        let mut rng = stream_rng(seed, stream::DISCRIMINATORS);
        let mut discriminators = Vec::with_capacity(arch.num_domains);
        for k in 0..arch.num_domains {
            let (projection, first) = if m.projection_size > 0 {
                let pseed = derive_seed(derive_seed(seed, stream::PROJECTIONS), k as u64);
                let proj = init_projection(d, m.projection_size, pseed)?;
                let id = params.add(format!("disc{k}.projection"), proj.matrix, !m.trainable_projection);
                (Some(ProjectionLayer { param: id, seed: pseed }), m.projection_size)
            } else {
                (None, d)
            };
            let mut widths = vec![first];
            widths.extend_from_slice(&m.discriminator_hidden);
            widths.push(1);
            let mlp = Mlp::init(&mut params, &format!("disc{k}"), &widths, m.activation, false, &mut rng)?;
            discriminators.push(DomainDiscriminator { projection, mlp });
        }
        Ok(ModelBundle { arch, params, encoder, classifier, discriminators })
    }

    pub fn num_discriminators(&self) -> usize {
        self.discriminators.len()
    }

    pub fn encode(&self, tape: &mut Tape<'_>, x: Var, mode: Mode) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.arch.input_dim {
            return Err(dimension(format!("input has {cols} features, encoder expects {}", self.arch.input_dim)));
        }
        self.encoder.forward(tape, x, mode)
    }

    pub fn classify(&self, tape: &mut Tape<'_>, z: Var, mode: Mode) -> Result<Var> {
        self.classifier.forward(tape, z, mode)
    }

    /// Domain logit (`n × 1`) of discriminator `k`; the projection is always
    /// applied before the trainable layers.
    pub fn discriminate(&self, tape: &mut Tape<'_>, k: usize, z: Var, mode: Mode) -> Result<Var> {
        let disc = self
            .discriminators
            .get(k)
            .ok_or_else(|| argument(format!("no discriminator {k} (have {})", self.discriminators.len())))?;
        let mut h = z;
        if let Some(p) = &disc.projection {
            let w = mode.param(tape, p.param)?;
            h = tape.matmul(h, w)?;
            h = self.arch.model.activation.apply(tape, h)?;
        }
        disc.mlp.forward(tape, h, mode)
    }

    /// Encoded features `z = E(x)` without recording gradients.
    pub fn encode_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(&self.params);
        let xv = tape.constant(x.clone())?;
        let z = self.encode(&mut tape, xv, Mode::Detached)?;
        Ok(tape.value(z).clone())
    }

    /// Class logits from already encoded features.
    pub fn classify_tensor(&self, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(&self.params);
        let zv = tape.constant(z.clone())?;
        let out = self.classify(&mut tape, zv, Mode::Detached)?;
        Ok(tape.value(out).clone())
    }

    /// Domain logits of discriminator `k` from already encoded features.
    pub fn discriminate_tensor(&self, k: usize, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new(&self.params);
        let zv = tape.constant(z.clone())?;
        let out = self.discriminate(&mut tape, k, zv, Mode::Detached)?;
        Ok(tape.value(out).clone())
    }

    pub fn forward(&self, x: &Tensor) -> Result<BundleOutput> {
        let mut tape = Tape::new(&self.params);
        let xv = tape.constant(x.clone())?;
        let z = self.encode(&mut tape, xv, Mode::Detached)?;
        let logits = self.classify(&mut tape, z, Mode::Detached)?;
        let mut domain_logits = Vec::with_capacity(self.discriminators.len());
        for k in 0..self.discriminators.len() {
            let d = self.discriminate(&mut tape, k, z, Mode::Detached)?;
            domain_logits.push(tape.value(d).clone());
        }
        Ok(BundleOutput { class_logits: tape.value(logits).clone(), domain_logits, z: tape.value(z).clone() })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.classify_tensor(&self.encode_tensor(x)?)?;
        Ok(argmax_rows(&logits))
    }

    /// Fraction of correctly classified examples.
    pub fn accuracy(&self, sample: &DomainSample) -> Result<f64> {
        let pred = self.predict(&sample.features)?;
        Ok(fraction_equal(&pred, &sample.labels))
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoder.param_ids()
    }

    pub fn classifier_params(&self) -> Vec<ParamId> {
        self.classifier.param_ids()
    }

    /// Trainable parameters of discriminator `k`; the projection is included
    /// only when it is trainable.
    pub fn discriminator_params(&self, k: usize) -> Vec<ParamId> {
        let d = &self.discriminators[k];
        let mut ids = d.mlp.param_ids();
        if let Some(p) = &d.projection {
            if !self.params.is_frozen(p.param) {
                ids.insert(0, p.param);
            }
        }
        ids
    }

    pub fn projection_params(&self) -> Vec<ParamId> {
        self.discriminators.iter().filter_map(|d| d.projection.as_ref().map(|p| p.param)).collect()
    }
}

pub(crate) fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            t.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (j, &v)| if v > bv { (j, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

pub(crate) fn fraction_equal(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}
