//! Experiment configuration in a flat `key = value` text format.
//!
//! ```text
//! # four rotated moons, hold out the last one
//! family = moons
//! domains = 0, 15, 30, 45
//! unseen = 3
//! seeds = 1, 2, 3
//! epochs = 50
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use g2dm_core::divergence::{AuditConfig, EstimatorConfig};
use g2dm_core::models::Activation;
use g2dm_core::training::{Aggregation, Criterion, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{argument, Error, Result};

/// A trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    G2dm,
    Erm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::G2dm => "g2dm",
            Method::Erm => "erm",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [Method::G2dm, Method::Erm].into_iter().find(|m| m.name() == s)
    }
}

/// Where the domains come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A built-in family; each parameter is one domain's rotation in degrees
    /// (for `shifted_covariance`, the scale of the second axis).
    Builtin { family: String, params: Vec<f64>, dim: usize, classes: usize, samples_per_domain: usize },
    /// A CSV file with columns `domain,label,f0,...`.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Domain indices used as unseen domains; empty means every domain in turn.
    pub unseen: Vec<usize>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub criteria: Vec<Criterion>,
    /// Seed of the data draw, independent of the training seeds.
    pub data_seed: u64,
    pub validation_fraction: f64,
    /// Trainers to run in each protocol.
    pub methods: Vec<Method>,
    pub estimator: EstimatorConfig,
    pub audit: AuditConfig,
    pub hull_pairs: usize,
    pub hull_tau: f64,
    pub hull_mixture_size: usize,
    pub rp_sizes: Vec<usize>,
    pub meta_samples: usize,
    /// Draw a fresh rotation in `[lo, hi]` degrees per meta-risk domain
    /// instead of picking one of the listed domains.
    pub meta_rotation: Option<(f64, f64)>,
    /// Not part of the config hash.
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Builtin {
                family: "moons".into(),
                params: vec![0.0, 15.0, 30.0, 45.0],
                dim: 2,
                classes: 2,
                samples_per_domain: 400,
            },
            unseen: Vec::new(),
            train: TrainConfig::default(),
            seeds: vec![1, 2, 3],
            criteria: Criterion::ALL.to_vec(),
            data_seed: 7,
            validation_fraction: 0.2,
            methods: vec![Method::G2dm, Method::Erm],
            estimator: EstimatorConfig::default(),
            audit: AuditConfig::default(),
            hull_pairs: 100,
            hull_tau: 0.1,
            hull_mixture_size: 300,
            rp_sizes: vec![0, 8, 16, 32, 64, 128, 256],
            meta_samples: 2000,
            meta_rotation: None,
            out_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text, path)
    }

    /// Parse `text`; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<ExperimentConfig> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::parse(origin, i + 1, format!("expected 'key = value', found '{line}'")))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(Error::parse(origin, i + 1, format!("duplicate key '{key}'")));
            }
        }
        let mut cfg = ExperimentConfig::default();
        let (mut family, mut params, mut dim, mut classes, mut n) = match cfg.data.clone() {
            DataSource::Builtin { family, params, dim, classes, samples_per_domain } => (family, params, dim, classes, samples_per_domain),
            DataSource::Csv { .. } => unreachable!(),
        };
        let mut csv_path = None;
        for (key, (line, value)) in &entries {
            let p = Field { origin, line: *line, key, value };
            let t = &mut cfg.train;
            match key.as_str() {
                "family" => family = value.clone(),
                "domains" => params = p.list()?,
                "dim" => dim = p.get()?,
                "classes" => classes = p.get()?,
                "samples_per_domain" => n = p.get()?,
                "csv" => csv_path = Some(PathBuf::from(value)),
                "unseen" => cfg.unseen = if value == "all" { Vec::new() } else { p.list()? },
                "seeds" => cfg.seeds = p.list()?,
                "criteria" => {
                    cfg.criteria = p
                        .items()
                        .map(|s| Criterion::parse(s).ok_or_else(|| p.error(format!("unknown criterion '{s}'"))))
                        .collect::<Result<_>>()?
                }
                "out" => cfg.out_dir = PathBuf::from(value),
                "workers" => cfg.workers = p.get()?,
                "data_seed" => cfg.data_seed = p.get()?,
                "validation_fraction" => cfg.validation_fraction = p.get()?,
                "methods" => {
                    cfg.methods = p
                        .items()
                        .map(|s| Method::parse(s).ok_or_else(|| p.error(format!("unknown method '{s}'"))))
                        .collect::<Result<_>>()?
                }
                "lr_task" => t.lr_task = p.get()?,
                "lr_disc" => t.lr_disc = p.get()?,
                "alpha" => t.alpha = p.get()?,
                "batch_per_domain" => t.batch_per_domain = p.get()?,
                "epochs" => t.epochs = p.get()?,
                "warmup_iters" => t.warmup_iters = p.get()?,
                "warmup_threshold" => t.warmup_threshold = p.get()?,
                "momentum" => t.momentum = p.get()?,
                "weight_decay" => t.weight_decay = p.get()?,
                "label_smoothing" => t.label_smoothing = p.get()?,
                "aggregation" => {
                    t.aggregation = match value.as_str() {
                        "sum" => Aggregation::Sum,
                        "hypervolume" => Aggregation::Hypervolume,
                        other => return Err(p.error(format!("unknown aggregation '{other}'"))),
                    }
                }
                "nadir_slack" => t.nadir_slack = p.get()?,
                "patience" => t.patience = p.get()?,
                "decay_factor" => t.decay_factor = p.get()?,
                "encoder_widths" => t.model.encoder_widths = p.list()?,
                "classifier_hidden" => t.model.classifier_hidden = p.list()?,
                "discriminator_hidden" => t.model.discriminator_hidden = p.list()?,
                "projection_size" => t.model.projection_size = p.get()?,
                "trainable_projection" => t.model.trainable_projection = p.get()?,
                "activation" => {
                    t.model.activation = match value.as_str() {
                        "relu" => Activation::Relu,
                        "tanh" => Activation::Tanh,
                        other => return Err(p.error(format!("unknown activation '{other}'"))),
                    }
                }
                "pad_folds" => cfg.estimator.folds = p.get()?,
                "pad_cap" => cfg.estimator.cap = p.get()?,
                "pad_hidden" => cfg.estimator.hidden = p.list()?,
                "pad_epochs" => cfg.estimator.epochs = p.get()?,
                "pad_lr" => cfg.estimator.lr = p.get()?,
                "pad_noise_tolerance" => cfg.estimator.noise_tolerance = p.get()?,
                "audit_grid_points" => cfg.audit.grid_points = p.get()?,
                "audit_refinements" => cfg.audit.refinements = p.get()?,
                "audit_mixture_size" => cfg.audit.mixture_size = p.get()?,
                "hull_pairs" => cfg.hull_pairs = p.get()?,
                "hull_tau" => cfg.hull_tau = p.get()?,
                "hull_mixture_size" => cfg.hull_mixture_size = p.get()?,
                "rp_sizes" => cfg.rp_sizes = p.list()?,
                "meta_samples" => cfg.meta_samples = p.get()?,
                "meta_rotation" => match p.list::<f64>()?.as_slice() {
                    [lo, hi] => cfg.meta_rotation = Some((*lo, *hi)),
                    _ => return Err(p.error("meta_rotation: expected 'lo, hi'".into())),
                },
                other => return Err(Error::parse(origin, *line, format!("unknown key '{other}'"))),
            }
        }
        cfg.data = match csv_path {
            Some(path) => DataSource::Csv { path },
            None => DataSource::Builtin { family, params, dim, classes, samples_per_domain: n },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.estimator.validate()?;
        if self.seeds.is_empty() {
            return Err(argument("at least one seed is required"));
        }
        if self.methods.is_empty() {
            return Err(argument("at least one method is required"));
        }
        if self.criteria.is_empty() {
            return Err(argument("at least one stopping criterion is required"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(argument(format!("validation_fraction {} outside (0, 1)", self.validation_fraction)));
        }
        if let DataSource::Builtin { params, samples_per_domain, .. } = &self.data {
            if params.is_empty() || *samples_per_domain == 0 {
                return Err(argument("builtin data needs domain parameters and samples_per_domain > 0"));
            }
            if let Some(u) = self.unseen.iter().find(|u| **u >= params.len()) {
                return Err(argument(format!("unseen domain {u} out of range for {} domains", params.len())));
            }
        }
        let mut sorted = self.unseen.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.unseen.len() {
            return Err(argument("unseen domains listed twice"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. Key order in the source file,
    /// comments, the output directory and the worker count do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configs serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

struct Field<'a> {
    origin: &'a Path,
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Field<'_> {
    fn error(&self, msg: String) -> Error {
        Error::parse(self.origin, self.line, msg)
    }

    fn get<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| self.error(format!("{}: cannot parse '{}'", self.key, self.value)))
    }

    fn items(&self) -> impl Iterator<Item = &str> {
        self.value.split(',').map(str::trim).filter(|s| !s.is_empty())
    }

    fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.items().map(|s| s.parse().map_err(|_| self.error(format!("{}: cannot parse '{s}'", self.key)))).collect()
    }
}
