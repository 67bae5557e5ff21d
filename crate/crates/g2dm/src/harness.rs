//! Experiment protocols built on the core trainers and estimators.

use g2dm_core::divergence::{
    bound_audit, encoded_pairwise_matrix, heatmap_delta, hull_bound_check, pairwise_matrix, BoundAudit,
    DivergenceMatrix, HeatmapDelta, HullReport,
};
use g2dm_core::domains::{split, Dataset, DomainSample, DomainSpec, Family, MetaDistribution};
use g2dm_core::math;
use g2dm_core::models::ModelBundle;
use g2dm_core::rng::{self, derive_seed, StreamRng};
use g2dm_core::training::{
    train_erm_observed, train_g2dm_observed, Criterion, EpochRecord, ErmSampling, MetricHistory, SourceData,
    TrainConfig, TrainOutcome,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, Method};
use crate::error::{argument, Error, Result};
use crate::io;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// All domains of an experiment, fully sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub domains: Vec<DomainSample>,
    pub labels: Vec<String>,
    /// Generators of the domains, for built-in data.
    pub specs: Option<Vec<DomainSpec>>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }
}

pub fn domain_specs(family: &str, params: &[f64], dim: usize, classes: usize) -> Result<Vec<DomainSpec>> {
    let fam = Family::from_id(family, dim, classes)?;
    params
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let spec = match fam {
                Family::ShiftedCovariance { dim, .. } => {
                    let mut scale = vec![1.0; dim];
                    scale[1.min(dim - 1)] = p;
                    DomainSpec { scale, ..DomainSpec::new(i, fam.clone()) }
                }
                _ => DomainSpec::rotated(i, fam.clone(), p),
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

/// Sample or load every domain named by the config.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    match &cfg.data {
        DataSource::Builtin { family, params, dim, classes, samples_per_domain } => {
            let specs = domain_specs(family, params, *dim, *classes)?;
            let domains = specs
                .iter()
                .map(|s| {
                    let mut r = rng::stream_rng(cfg.data_seed, s.id as u64);
                    let ex = g2dm_core::domains::sample_examples(s, *samples_per_domain, &mut r)?;
                    Ok(DomainSample::from_examples(s.id, &ex)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = params.iter().map(|p| format!("{family}@{p}")).collect();
            Ok(Prepared { domains, labels, specs: Some(specs) })
        }
        DataSource::Csv { path } => {
            let domains = io::read_samples(path)?;
            let labels = domains.iter().map(|d| format!("domain{}", d.domain)).collect();
            Ok(Prepared { domains, labels, specs: None })
        }
    }
}

/// Stratified train/validation split of one source, fixed per training seed.
pub fn split_source(sample: &DomainSample, validation_fraction: f64, seed: u64) -> Result<SourceData> {
    let data = Dataset::from_examples(sample.to_examples())?;
    let mut r = rng::stream_rng(seed, sample.domain as u64);
    let parts = split(&data, &[1.0 - validation_fraction, validation_fraction], &mut r)?;
    Ok(SourceData { train: parts[0].domain_sample(sample.domain)?, validation: parts[1].domain_sample(sample.domain)? })
}

fn sources_for(prep: &Prepared, indices: &[usize], cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SourceData>> {
    let split_seed = derive_seed(cfg.data_seed, seed);
    indices.iter().map(|&i| split_source(&prep.domains[i], cfg.validation_fraction, split_seed)).collect()
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.train.clone() }
}

/// Unseen domains visited by a protocol: the configured list, or all.
pub fn unseen_domains(cfg: &ExperimentConfig, n: usize) -> Vec<usize> {
    if cfg.unseen.is_empty() {
        (0..n).collect()
    } else {
        cfg.unseen.clone()
    }
}

/// The single unseen domain of one-target commands: the first configured
/// one, else the last domain.
pub fn primary_unseen(cfg: &ExperimentConfig, n: usize) -> usize {
    cfg.unseen.first().copied().unwrap_or(n.saturating_sub(1))
}

fn others(n: usize, unseen: usize) -> Vec<usize> {
    (0..n).filter(|i| *i != unseen).collect()
}

/// Epoch chosen by `criterion` and the metric value there. Ties go to the
/// earliest epoch.
pub fn select_by_criterion(history: &MetricHistory, criterion: Criterion) -> Result<(usize, f64)> {
    if history.is_empty() {
        return Err(argument("cannot select from an empty history"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in history.records.iter().enumerate() {
        let (value, better): (f64, fn(f64, f64) -> bool) = match criterion {
            Criterion::SourceAcc => (r.mean_source_val_acc(), |a, b| a > b),
            Criterion::SourceLoss => (r.train_task_loss, |a, b| a < b),
            Criterion::UnseenAcc => (
                r.unseen_acc.ok_or_else(|| argument(format!("epoch {i} has no unseen accuracy for {}", criterion.name())))?,
                |a, b| a > b,
            ),
        };
        if best.is_none_or(|(_, b)| better(value, b)) {
            best = Some((i, value));
        }
    }
    Ok(best.expect("non-empty history"))
}

/// Outcome of one criterion on one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: Criterion,
    pub epoch: usize,
    pub value: f64,
    /// Unseen accuracy at the selected epoch.
    pub unseen_acc: f64,
    /// Whether the criterion reads unseen labels.
    pub privileged: bool,
}

fn selections(history: &MetricHistory, criteria: &[Criterion]) -> Result<Vec<Selection>> {
    criteria
        .iter()
        .map(|&c| {
            let (epoch, value) = select_by_criterion(history, c)?;
            let unseen_acc = history.records[epoch].unseen_acc.ok_or_else(|| argument("history lacks unseen accuracy"))?;
            Ok(Selection { criterion: c, epoch, value, unseen_acc, privileged: c.is_privileged() })
        })
        .collect()
}

/// Keeps a copy of the model at every criterion's best epoch so far.
struct BestTracker {
    criteria: Vec<Criterion>,
    history: MetricHistory,
    best: Vec<Option<(usize, ModelBundle)>>,
}

impl BestTracker {
    fn new(criteria: &[Criterion]) -> BestTracker {
        BestTracker { criteria: criteria.to_vec(), history: MetricHistory::default(), best: vec![None; criteria.len()] }
    }

    fn observe(&mut self, record: &EpochRecord, bundle: &ModelBundle) {
        self.history.push(record.clone());
        let epoch = self.history.len() - 1;
        for (c, slot) in self.criteria.iter().zip(&mut self.best) {
            if let Ok((e, _)) = select_by_criterion(&self.history, *c) {
                if e == epoch {
                    *slot = Some((epoch, bundle.clone()));
                }
            }
        }
    }
}

pub(crate) fn train_method(
    method: Method,
    sources: &[SourceData],
    cfg: &TrainConfig,
    unseen: &DomainSample,
    observer: &mut dyn FnMut(&EpochRecord, &ModelBundle),
) -> Result<TrainOutcome> {
    Ok(match method {
        Method::G2dm => train_g2dm_observed(sources, cfg, Some(unseen), observer)?,
        Method::Erm => train_erm_observed(sources, cfg, Some(unseen), ErmSampling::Pooled, observer)?,
    })
}

/// Full record of one (unseen domain, seed, method) training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub unseen: String,
    pub seed: u64,
    pub method: Method,
    pub selections: Vec<Selection>,
    pub history: MetricHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub unseen: String,
    pub seed: u64,
    pub method: Method,
    pub criterion: Criterion,
    pub epoch: usize,
    pub accuracy: f64,
}

/// Mean and sample standard deviation over seeds; `unseen = "average"`
/// averages the per-domain means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub unseen: String,
    pub method: Method,
    pub criterion: Criterion,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub runs: Vec<RunRecord>,
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| argument(format!("cannot start {workers} workers: {e}")))
}

/// Run `jobs` on the configured pool; results keep job order.
fn run_jobs<J: Sync, T: Send>(workers: usize, jobs: &[J], f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let pool = thread_pool(workers)?;
    pool.install(|| jobs.par_iter().map(&f).collect::<Vec<_>>()).into_iter().collect()
}

fn run_one(prep: &Prepared, cfg: &ExperimentConfig, unseen: usize, seed: u64, method: Method) -> Result<RunRecord> {
    let wrap = |e: Error| Error::Run { unseen: prep.labels[unseen].clone(), seed, source: Box::new(e) };
    let sources = sources_for(prep, &others(prep.len(), unseen), cfg, seed).map_err(wrap)?;
    let out = train_method(method, &sources, &train_config(cfg, seed), &prep.domains[unseen], &mut |_, _| {}).map_err(wrap)?;
    let selections = selections(&out.history, &cfg.criteria).map_err(wrap)?;
    Ok(RunRecord { unseen: prep.labels[unseen].clone(), seed, method, selections, history: out.history })
}

/// Hold out each unseen domain in turn, train every method with every seed
/// on the rest, and tabulate unseen accuracy per stopping criterion.
pub fn leave_one_domain_out(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    if prep.len() < 3 {
        return Err(argument(format!("leave-one-domain-out needs at least 3 domains, got {}", prep.len())));
    }
    let mut jobs = Vec::new();
    for u in unseen_domains(cfg, prep.len()) {
        for &seed in &cfg.seeds {
            for &m in &cfg.methods {
                jobs.push((u, seed, m));
            }
        }
    }
    let runs = run_jobs(cfg.workers, &jobs, |&(u, seed, m)| run_one(&prep, cfg, u, seed, m))?;
    Ok(tabulate(cfg, runs))
}

fn tabulate(cfg: &ExperimentConfig, runs: Vec<RunRecord>) -> ExperimentResult {
    let mut rows = Vec::new();
    for r in &runs {
        for s in &r.selections {
            rows.push(ResultRow {
                unseen: r.unseen.clone(),
                seed: r.seed,
                method: r.method,
                criterion: s.criterion,
                epoch: s.epoch,
                accuracy: s.unseen_acc,
            });
        }
    }
    let mut unseen_labels: Vec<String> = Vec::new();
    for r in &runs {
        if !unseen_labels.contains(&r.unseen) {
            unseen_labels.push(r.unseen.clone());
        }
    }
    let mut aggregates = Vec::new();
    for &m in &cfg.methods {
        for &c in &cfg.criteria {
            let mut domain_means = Vec::new();
            for u in &unseen_labels {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| &r.unseen == u && r.method == m && r.criterion == c)
                    .map(|r| r.accuracy)
                    .collect();
                let mean = math::mean(&v);
                domain_means.push(mean);
                aggregates.push(Aggregate { unseen: u.clone(), method: m, criterion: c, mean, std: spread(&v), n: v.len() });
            }
            aggregates.push(Aggregate {
                unseen: "average".into(),
                method: m,
                criterion: c,
                mean: math::mean(&domain_means),
                std: spread(&domain_means),
                n: domain_means.len(),
            });
        }
    }
    ExperimentResult { config_hash: cfg.hash(), code_version: CODE_VERSION.into(), seeds: cfg.seeds.clone(), rows, aggregates, runs }
}

fn spread(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        math::std_dev(v)
    }
}

/// Monte Carlo estimate of the expected 0-1 risk over domains drawn from `meta`.
pub fn estimate_meta_risk(bundle: &ModelBundle, meta: &MetaDistribution, n: usize, rng: &mut StreamRng) -> Result<f64> {
    if n == 0 {
        return Err(argument("meta-risk needs at least one sample"));
    }
    let ex = meta.sample(n, rng)?;
    let sample = DomainSample::from_examples(0, &ex)?;
    Ok(1.0 - bundle.accuracy(&sample)?)
}

/// Result of a single `train` run on the primary unseen domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub code_version: String,
    pub unseen: String,
    pub seed: u64,
    pub method: Method,
    pub selections: Vec<Selection>,
    pub final_unseen_acc: f64,
    /// Expected risk over a uniform meta-distribution of all built-in domains
    /// (or of rotations drawn from `meta_rotation`).
    pub meta_risk: Option<f64>,
    pub warnings: Vec<String>,
    pub history: MetricHistory,
}

/// Trained model of a single run, plus copies at each criterion's epoch.
pub struct TrainArtifacts {
    pub report: TrainReport,
    pub bundle: ModelBundle,
    pub best: Vec<(Criterion, usize, ModelBundle)>,
}

pub fn train_single(cfg: &ExperimentConfig, seed: u64, method: Method) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let unseen = primary_unseen(cfg, prep.len());
    if unseen >= prep.len() {
        return Err(argument(format!("unseen domain {unseen} out of range")));
    }
    let sources = sources_for(&prep, &others(prep.len(), unseen), cfg, seed)?;
    let mut tracker = BestTracker::new(&cfg.criteria);
    let out = train_method(method, &sources, &train_config(cfg, seed), &prep.domains[unseen], &mut |r, b| {
        tracker.observe(r, b)
    })?;
    let selections = selections(&out.history, &cfg.criteria)?;
    let meta_risk = match &prep.specs {
        Some(specs) => {
            let mut meta = MetaDistribution::uniform(specs.clone())?;
            if let Some((lo, hi)) = cfg.meta_rotation {
                meta = meta.with_continuous_rotation(lo, hi)?;
            }
            let mut r = rng::stream_rng(derive_seed(cfg.data_seed, seed), u64::MAX);
            Some(estimate_meta_risk(&out.bundle, &meta, cfg.meta_samples, &mut r)?)
        }
        None => None,
    };
    let best = cfg
        .criteria
        .iter()
        .zip(tracker.best)
        .filter_map(|(c, b)| b.map(|(e, bundle)| (*c, e, bundle)))
        .collect();
    let report = TrainReport {
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.into(),
        unseen: prep.labels[unseen].clone(),
        seed,
        method,
        final_unseen_acc: out.history.last().and_then(|r| r.unseen_acc).unwrap_or(0.0),
        selections,
        meta_risk,
        warnings: out.history.warnings.clone(),
        history: out.history,
    };
    Ok(TrainArtifacts { report, bundle: out.bundle, best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedDivergence {
    pub seed: u64,
    pub erm: DivergenceMatrix,
    pub g2dm: DivergenceMatrix,
    pub delta: HeatmapDelta,
    pub erm_unseen_acc: f64,
    pub g2dm_unseen_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub config_hash: String,
    pub code_version: String,
    pub unseen: String,
    /// Divergences among all domains on raw features.
    pub raw: DivergenceMatrix,
    /// Source divergences on encoded features, per seed.
    pub encoded: Vec<SeedDivergence>,
    /// Fraction of positive deltas pooled over seeds.
    pub fraction_positive: f64,
    pub mean_delta: f64,
}

fn final_acc(h: &MetricHistory) -> f64 {
    h.last().and_then(|r| r.unseen_acc).unwrap_or(0.0)
}

/// Pairwise divergences on raw features, and on features encoded by ERM and
/// G2DM models trained on the sources with each seed.
pub fn divergence_study(cfg: &ExperimentConfig) -> Result<DivergenceReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let unseen = primary_unseen(cfg, prep.len());
    let named: Vec<_> = prep.labels.iter().cloned().zip(prep.domains.iter().map(|d| d.features.clone())).collect();
    let raw = pairwise_matrix(&named, &cfg.estimator)?;
    let source_idx = others(prep.len(), unseen);
    let source_named: Vec<_> = source_idx.iter().map(|&i| named[i].clone()).collect();
    let encoded = run_jobs(cfg.workers, &cfg.seeds, |&seed| {
        let sources = sources_for(&prep, &source_idx, cfg, seed)?;
        let tc = train_config(cfg, seed);
        let g = train_method(Method::G2dm, &sources, &tc, &prep.domains[unseen], &mut |_, _| {})?;
        let e = train_method(Method::Erm, &sources, &tc, &prep.domains[unseen], &mut |_, _| {})?;
        let est = cfg.estimator.with_seed(derive_seed(cfg.estimator.seed, seed));
        let mg = encoded_pairwise_matrix(&g.bundle, &source_named, &est)?;
        let me = encoded_pairwise_matrix(&e.bundle, &source_named, &est)?;
        let delta = heatmap_delta(&me, &mg)?;
        Ok(SeedDivergence {
            seed,
            erm: me,
            g2dm: mg,
            delta,
            erm_unseen_acc: final_acc(&e.history),
            g2dm_unseen_acc: final_acc(&g.history),
        })
    })?;
    let deltas: Vec<f64> =
        encoded.iter().flat_map(|s| (0..s.delta.labels.len()).flat_map(move |i| (i + 1..s.delta.labels.len()).map(move |j| s.delta.delta[i][j]))).collect();
    Ok(DivergenceReport {
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.into(),
        unseen: prep.labels[unseen].clone(),
        raw,
        fraction_positive: deltas.iter().filter(|d| **d > 0.0).count() as f64 / deltas.len().max(1) as f64,
        mean_delta: math::mean(&deltas),
        encoded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAudit {
    pub seed: u64,
    pub audit: BoundAudit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_hash: String,
    pub code_version: String,
    pub unseen: String,
    /// Mixture divergences against the largest source pair, raw features.
    pub hull: HullReport,
    /// Risk bound of the G2DM model per seed (reads unseen labels).
    pub audits: Vec<SeedAudit>,
    pub privileged: bool,
}

/// Convex-hull check on the raw sources and a risk-bound audit of G2DM
/// models trained with each seed.
pub fn audit_study(cfg: &ExperimentConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let unseen = primary_unseen(cfg, prep.len());
    let source_idx = others(prep.len(), unseen);
    let raw_sources: Vec<DomainSample> = source_idx.iter().map(|&i| prep.domains[i].clone()).collect();
    let mut r = rng::stream_rng(cfg.estimator.seed, derive_seed(cfg.data_seed, 0x4855_4c4c));
    let hull = hull_bound_check(&raw_sources, cfg.hull_pairs, cfg.hull_tau, cfg.hull_mixture_size, &cfg.estimator, &mut r)?;
    let audits = run_jobs(cfg.workers, &cfg.seeds, |&seed| {
        let sources = sources_for(&prep, &source_idx, cfg, seed)?;
        let g = train_method(Method::G2dm, &sources, &train_config(cfg, seed), &prep.domains[unseen], &mut |_, _| {})?;
        let held_out: Vec<DomainSample> = sources.iter().map(|s| s.validation.clone()).collect();
        let audit_cfg = g2dm_core::divergence::AuditConfig { seed: derive_seed(cfg.audit.seed, seed), ..cfg.audit.clone() };
        Ok(SeedAudit { seed, audit: bound_audit(&held_out, &prep.domains[unseen], &g.bundle, &audit_cfg)? })
    })?;
    Ok(AuditReport {
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.into(),
        unseen: prep.labels[unseen].clone(),
        hull,
        audits,
        privileged: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Source labels used for training.
    pub sources: Vec<String>,
    /// The source left out; `None` for the full set.
    pub removed: Option<String>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub config_hash: String,
    pub code_version: String,
    pub unseen: String,
    pub criterion: Criterion,
    pub rows: Vec<AblationRow>,
}

fn selected_acc(h: &MetricHistory, c: Criterion) -> Result<f64> {
    let (e, _) = select_by_criterion(h, c)?;
    h.records[e].unseen_acc.ok_or_else(|| argument("history lacks unseen accuracy"))
}

/// Unseen accuracy of G2DM trained on every subset with one source removed,
/// plus the full source set. Accuracy is read at the first configured
/// criterion's epoch.
pub fn source_ablation(cfg: &ExperimentConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let unseen = primary_unseen(cfg, prep.len());
    let all = others(prep.len(), unseen);
    if all.len() < 3 {
        return Err(argument(format!("source ablation needs at least 3 sources, got {}", all.len())));
    }
    let criterion = cfg.criteria[0];
    let mut subsets: Vec<(Vec<usize>, Option<usize>)> = vec![(all.clone(), None)];
    for &drop in &all {
        subsets.push((all.iter().copied().filter(|i| *i != drop).collect(), Some(drop)));
    }
    let jobs: Vec<(usize, u64)> = (0..subsets.len()).flat_map(|s| cfg.seeds.iter().map(move |&seed| (s, seed))).collect();
    let accs = run_jobs(cfg.workers, &jobs, |&(s, seed)| {
        let sources = sources_for(&prep, &subsets[s].0, cfg, seed)?;
        let g = train_method(Method::G2dm, &sources, &train_config(cfg, seed), &prep.domains[unseen], &mut |_, _| {})?;
        selected_acc(&g.history, criterion)
    })?;
    let rows = subsets
        .iter()
        .enumerate()
        .map(|(s, (idx, removed))| {
            let per_seed: Vec<f64> = jobs.iter().zip(&accs).filter(|((js, _), _)| *js == s).map(|(_, a)| *a).collect();
            AblationRow {
                sources: idx.iter().map(|&i| prep.labels[i].clone()).collect(),
                removed: removed.map(|r| prep.labels[r].clone()),
                mean: math::mean(&per_seed),
                per_seed,
            }
        })
        .collect();
    Ok(AblationTable { config_hash: cfg.hash(), code_version: CODE_VERSION.into(), unseen: prep.labels[unseen].clone(), criterion, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Projection output size; 0 feeds the encoder output directly.
    pub size: usize,
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub config_hash: String,
    pub code_version: String,
    pub unseen: String,
    pub criterion: Criterion,
    pub rows: Vec<SweepRow>,
}

/// One G2DM run per projection size and seed; everything else is shared.
pub fn rp_size_sweep(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SweepTable> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(argument("projection sweep needs at least one size"));
    }
    let prep = prepare(cfg)?;
    let unseen = primary_unseen(cfg, prep.len());
    let source_idx = others(prep.len(), unseen);
    let criterion = cfg.criteria[0];
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let accs = run_jobs(cfg.workers, &jobs, |&(size, seed)| {
        let sources = sources_for(&prep, &source_idx, cfg, seed)?;
        let mut tc = train_config(cfg, seed);
        tc.model.projection_size = size;
        let g = train_method(Method::G2dm, &sources, &tc, &prep.domains[unseen], &mut |_, _| {})?;
        selected_acc(&g.history, criterion)
    })?;
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let per_seed: Vec<f64> = accs[k * cfg.seeds.len()..(k + 1) * cfg.seeds.len()].to_vec();
            SweepRow { size, mean: math::mean(&per_seed), per_seed }
        })
        .collect();
    Ok(SweepTable { config_hash: cfg.hash(), code_version: CODE_VERSION.into(), unseen: prep.labels[unseen].clone(), criterion, rows })
}
