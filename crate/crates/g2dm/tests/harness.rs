use g2dm::config::{DataSource, ExperimentConfig, Method};
use g2dm::harness::*;
use g2dm::report::{emit_report, to_csv, Tabular};
use g2dm::Error;
use g2dm_core::domains::{DomainSpec, MetaDistribution};
use g2dm_core::rng;
use g2dm_core::training::{Criterion, EpochRecord, MetricHistory};
use proptest::prelude::*;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        data: DataSource::Builtin { family: "moons".into(), params: vec![0.0, 20.0, 40.0, 60.0], dim: 2, classes: 2, samples_per_domain: 100 },
        unseen: vec![3],
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 3;
    cfg.estimator.epochs = 4;
    cfg
}

fn record(epoch: usize, loss: f64, val: f64, unseen: Option<f64>) -> EpochRecord {
    EpochRecord {
        epoch,
        train_task_loss: loss,
        source_val_acc: vec![val, val],
        disc_losses: Vec::new(),
        disc_val_acc: None,
        unseen_acc: unseen,
        lr_task: 0.1,
        lr_disc: 0.1,
    }
}

fn history(rows: &[(f64, f64, Option<f64>)]) -> MetricHistory {
    let mut h = MetricHistory::default();
    for (i, (l, v, u)) in rows.iter().enumerate() {
        h.push(record(i, *l, *v, *u));
    }
    h
}

#[test]
fn selection_picks_earliest_best() {
    let h = history(&[(0.9, 0.6, Some(0.5)), (0.4, 0.8, Some(0.7)), (0.4, 0.8, Some(0.9)), (0.5, 0.7, Some(0.9))]);
    assert_eq!(select_by_criterion(&h, Criterion::SourceAcc).unwrap(), (1, 0.8));
    assert_eq!(select_by_criterion(&h, Criterion::SourceLoss).unwrap(), (1, 0.4));
    assert_eq!(select_by_criterion(&h, Criterion::UnseenAcc).unwrap(), (2, 0.9));
}

#[test]
fn selection_errors() {
    assert!(select_by_criterion(&MetricHistory::default(), Criterion::SourceAcc).is_err());
    let h = history(&[(0.5, 0.5, None)]);
    assert!(select_by_criterion(&h, Criterion::UnseenAcc).is_err());
    assert!(select_by_criterion(&h, Criterion::SourceAcc).is_ok());
}

proptest! {
    #[test]
    fn source_criteria_ignore_unseen_metrics(
        rows in prop::collection::vec((0.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0), 1..30),
        noise in prop::collection::vec(0.0f64..1.0, 30),
    ) {
        let a = history(&rows.iter().map(|(l, v, u)| (*l, *v, Some(*u))).collect::<Vec<_>>());
        let b = history(&rows.iter().zip(&noise).map(|((l, v, _), n)| (*l, *v, Some(*n))).collect::<Vec<_>>());
        for c in [Criterion::SourceAcc, Criterion::SourceLoss] {
            prop_assert_eq!(select_by_criterion(&a, c).unwrap(), select_by_criterion(&b, c).unwrap());
        }
    }
}

#[test]
fn loo_table_shape() {
    let cfg = ExperimentConfig { unseen: vec![0, 3], ..tiny() };
    let r = leave_one_domain_out(&cfg).unwrap();
    assert_eq!(r.rows.len(), 2 * 2 * 2 * 3);
    // per domain and the average, for each method and criterion
    assert_eq!(r.aggregates.len(), 3 * 2 * 3);
    assert_eq!(r.config_hash, cfg.hash());
    assert!(r.rows.iter().all(|row| (0.0..=1.0).contains(&row.accuracy)));
    let csv = to_csv(&r).unwrap();
    assert_eq!(csv.lines().count(), 1 + r.rows.len() + r.aggregates.len());
    assert!(csv.lines().skip(1).all(|l| l.starts_with(&r.config_hash)));
}

#[test]
fn selected_epochs_match_histories() {
    let r = leave_one_domain_out(&tiny()).unwrap();
    for run in &r.runs {
        for s in &run.selections {
            assert_eq!(select_by_criterion(&run.history, s.criterion).unwrap().0, s.epoch);
            assert_eq!(run.history.records[s.epoch].unseen_acc, Some(s.unseen_acc));
            assert_eq!(s.privileged, s.criterion == Criterion::UnseenAcc);
        }
    }
}

#[test]
fn loo_needs_three_domains() {
    let cfg = ExperimentConfig {
        data: DataSource::Builtin { family: "moons".into(), params: vec![0.0, 20.0], dim: 2, classes: 2, samples_per_domain: 50 },
        unseen: Vec::new(),
        ..tiny()
    };
    assert!(matches!(leave_one_domain_out(&cfg), Err(Error::Core(g2dm_core::Error::Argument(_)))));
}

#[test]
fn run_errors_name_the_run() {
    let mut cfg = tiny();
    cfg.seeds = vec![5];
    cfg.methods = vec![Method::G2dm];
    cfg.train.model.encoder_widths = vec![];
    match leave_one_domain_out(&cfg) {
        Err(Error::Run { unseen, seed, .. }) => {
            assert_eq!(unseen, "moons@60");
            assert_eq!(seed, 5);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn splits_are_stratified_and_seeded() {
    let prep = prepare(&tiny()).unwrap();
    let a = split_source(&prep.domains[0], 0.2, 4).unwrap();
    let b = split_source(&prep.domains[0], 0.2, 4).unwrap();
    let c = split_source(&prep.domains[0], 0.2, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.train.len() + a.validation.len(), 100);
    assert_eq!(a.validation.len(), 20);
    let ones = a.validation.labels.iter().filter(|l| **l == 1).count();
    assert_eq!(ones, 10);
}

#[test]
fn prepared_domains_follow_the_params() {
    let prep = prepare(&tiny()).unwrap();
    assert_eq!(prep.labels, ["moons@0", "moons@20", "moons@40", "moons@60"]);
    assert!(prep.domains.iter().enumerate().all(|(i, d)| d.domain == i && d.len() == 100));
    assert_eq!(prep, prepare(&tiny()).unwrap());
    let specs = domain_specs("shifted_covariance", &[1.0, 3.0], 3, 2).unwrap();
    assert_eq!(specs[1].scale, vec![1.0, 3.0, 1.0]);
    assert!(domain_specs("spirals", &[0.0], 2, 2).is_err());
}

#[test]
fn meta_risk_is_a_probability() {
    let art = train_single(&tiny(), 1, Method::Erm).unwrap();
    let specs: Vec<DomainSpec> = (0..3).map(|i| DomainSpec::rotated_moons(i, 20.0 * i as f64)).collect();
    let meta = MetaDistribution::uniform(specs).unwrap();
    let r = estimate_meta_risk(&art.bundle, &meta, 300, &mut rng::seeded(1)).unwrap();
    assert!((0.0..=1.0).contains(&r));
    assert!(estimate_meta_risk(&art.bundle, &meta, 0, &mut rng::seeded(1)).is_err());
    assert!(art.report.meta_risk.is_some());
    assert_eq!(art.best.len(), 3);
}

#[test]
fn ablation_rows() {
    let t = source_ablation(&tiny()).unwrap();
    assert_eq!(t.rows.len(), 4);
    assert_eq!(t.rows[0].removed, None);
    assert_eq!(t.rows[0].sources.len(), 3);
    assert!(t.rows[1..].iter().all(|r| r.sources.len() == 2 && r.per_seed.len() == 2));
    let few = ExperimentConfig {
        data: DataSource::Builtin { family: "moons".into(), params: vec![0.0, 20.0, 40.0], dim: 2, classes: 2, samples_per_domain: 60 },
        unseen: vec![2],
        ..tiny()
    };
    assert!(source_ablation(&few).is_err());
}

#[test]
fn projection_sweep_rows() {
    let t = rp_size_sweep(&tiny(), &[0, 8]).unwrap();
    assert_eq!(t.rows.iter().map(|r| r.size).collect::<Vec<_>>(), [0, 8]);
    assert!(rp_size_sweep(&tiny(), &[]).is_err());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let r = leave_one_domain_out(&ExperimentConfig { seeds: vec![1], methods: vec![Method::Erm], ..tiny() }).unwrap();
    let err = emit_report(&blocker.join("sub"), &r).unwrap_err();
    assert_eq!(err.category(), "io");
    assert!(err.to_string().contains("file"), "{err}");
    let (json, csv) = emit_report(dir.path(), &r).unwrap();
    assert!(json.ends_with("result.json") && csv.ends_with("result.csv"));
    assert_eq!(<ExperimentResult as Tabular>::STEM, "result");
}

fn moons_cfg(params: &[f64], unseen: usize, epochs: usize, seeds: &[u64]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        data: DataSource::Builtin { family: "moons".into(), params: params.to_vec(), dim: 2, classes: 2, samples_per_domain: 300 },
        unseen: vec![unseen],
        seeds: seeds.to_vec(),
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = epochs;
    cfg
}

#[test]
fn erm_only_runs_once_per_domain() {
    let mut cfg = moons_cfg(&[0.0, 30.0, 60.0], 0, 2, &[4]);
    cfg.unseen.clear();
    cfg.methods = vec![Method::Erm];
    let r = leave_one_domain_out(&cfg).unwrap();
    assert_eq!(r.runs.len(), 3);
    assert!(r.runs.iter().all(|run| run.method == Method::Erm));
}

#[test]
fn aggregates_are_plain_means() {
    let r = leave_one_domain_out(&ExperimentConfig { unseen: vec![1, 3], seeds: vec![1, 2, 3], ..tiny() }).unwrap();
    for a in r.aggregates.iter().filter(|a| a.unseen != "average") {
        let v: Vec<f64> = r
            .rows
            .iter()
            .filter(|x| x.unseen == a.unseen && x.method == a.method && x.criterion == a.criterion)
            .map(|x| x.accuracy)
            .collect();
        assert_eq!(v.len(), 3);
        assert_eq!(a.n, 3);
        assert!((a.mean - v.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
    }
    for a in r.aggregates.iter().filter(|a| a.unseen == "average") {
        let per: Vec<f64> = r
            .aggregates
            .iter()
            .filter(|x| x.unseen != "average" && x.method == a.method && x.criterion == a.criterion)
            .map(|x| x.mean)
            .collect();
        assert!((a.mean - per.iter().sum::<f64>() / per.len() as f64).abs() <= 1e-12);
    }
}

#[test]
fn result_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let r = leave_one_domain_out(&tiny()).unwrap();
    let (json, _) = emit_report(dir.path(), &r).unwrap();
    let back: ExperimentResult = g2dm::io::read_json(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn single_domain_meta_collapses_to_domain_risk() {
    let art = train_single(&tiny(), 2, Method::Erm).unwrap();
    let spec = DomainSpec::rotated_moons(0, 60.0);
    let meta = MetaDistribution::uniform(vec![spec]).unwrap();
    let mut a = rng::seeded(8);
    let mut b = a.clone();
    let ex = meta.sample(500, &mut b).unwrap();
    let sample = g2dm_core::domains::DomainSample::from_examples(0, &ex).unwrap();
    let direct = 1.0 - art.bundle.accuracy(&sample).unwrap();
    assert_eq!(estimate_meta_risk(&art.bundle, &meta, 500, &mut a).unwrap(), direct);
}

#[test]
fn meta_risk_converges() {
    let art = train_single(&tiny(), 1, Method::G2dm).unwrap();
    let specs: Vec<DomainSpec> = (0..4).map(|i| DomainSpec::rotated_moons(i, 20.0 * i as f64)).collect();
    let meta = MetaDistribution::uniform(specs).unwrap();
    let big = estimate_meta_risk(&art.bundle, &meta, 100_000, &mut rng::seeded(99)).unwrap();
    let mut gaps: Vec<f64> =
        (0..10).map(|t| (estimate_meta_risk(&art.bundle, &meta, 1000, &mut rng::seeded(t)).unwrap() - big).abs()).collect();
    gaps.sort_by(f64::total_cmp);
    assert!(0.5 * (gaps[4] + gaps[5]) <= 0.02, "{gaps:?}");
}

#[test]
fn sweep_has_one_row_per_size_and_repeats() {
    let cfg = tiny();
    let sizes = [0, 4, 8, 16, 32, 64, 128];
    let a = rp_size_sweep(&cfg, &sizes).unwrap();
    assert_eq!(a.rows.len(), 7);
    assert!(a.rows.iter().flat_map(|r| &r.per_seed).all(|x| (0.0..=1.0).contains(x)));
    assert_eq!(a, rp_size_sweep(&cfg, &sizes).unwrap());
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn removing_a_duplicate_source_changes_little() {
    let t = source_ablation(&moons_cfg(&[0.0, 30.0, 30.0, 60.0, 45.0], 4, 30, &[1, 2, 3])).unwrap();
    let full = &t.rows[0].per_seed;
    let dup = t.rows.iter().find(|r| r.removed.as_deref() == Some("moons@30")).unwrap();
    let diffs: Vec<f64> = dup.per_seed.iter().zip(full).map(|(a, b)| (a - b).abs()).collect();
    assert!(median(diffs.clone()) <= 0.02, "{diffs:?}");
}

#[test]
fn removing_the_straddling_source_does_not_help() {
    let t = source_ablation(&moons_cfg(&[0.0, 30.0, 60.0, 45.0], 3, 30, &[1, 2, 3])).unwrap();
    let without = t.rows.iter().find(|r| r.removed.as_deref() == Some("moons@60")).unwrap();
    assert!(without.mean <= t.rows[0].mean, "{} > {}", without.mean, t.rows[0].mean);
}
