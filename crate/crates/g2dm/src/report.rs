//! JSON and CSV output of harness results.

use std::path::{Path, PathBuf};

use g2dm_core::divergence::DivergenceMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{AblationTable, AuditReport, DivergenceReport, ExperimentResult, SweepTable, TrainReport};
use crate::io;

/// A result that can be written as `<stem>.json` plus a flat `<stem>.csv`.
pub trait Tabular: Serialize {
    const STEM: &'static str;
    fn config_hash(&self) -> &str;
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// Render the CSV form; every row carries the config hash.
pub fn to_csv<T: Tabular>(report: &T) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config_hash"];
    header.extend(report.header());
    let fail = |e: csv::Error| Error::Parse { path: PathBuf::from(T::STEM), line: 0, msg: e.to_string() };
    w.write_record(&header).map_err(fail)?;
    for row in report.rows() {
        w.write_record(std::iter::once(report.config_hash().to_string()).chain(row)).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(Path::new(T::STEM), e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write both files into `dir` and return their paths.
pub fn emit_report<T: Tabular>(dir: &Path, report: &T) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join(format!("{}.json", T::STEM));
    let csv = dir.join(format!("{}.csv", T::STEM));
    io::write_json(&json, report)?;
    io::write_file(&csv, to_csv(report)?.as_bytes())?;
    Ok((json, csv))
}

impl Tabular for ExperimentResult {
    const STEM: &'static str = "result";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "unseen", "seed", "method", "criterion", "epoch", "accuracy", "std", "n"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    "run".into(),
                    r.unseen.clone(),
                    r.seed.to_string(),
                    r.method.name().into(),
                    r.criterion.name().into(),
                    r.epoch.to_string(),
                    f(r.accuracy),
                    String::new(),
                    String::new(),
                ]
            })
            .collect();
        out.extend(self.aggregates.iter().map(|a| {
            vec![
                "aggregate".into(),
                a.unseen.clone(),
                String::new(),
                a.method.name().into(),
                a.criterion.name().into(),
                String::new(),
                f(a.mean),
                f(a.std),
                a.n.to_string(),
            ]
        }));
        out
    }
}

impl Tabular for TrainReport {
    const STEM: &'static str = "train";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["epoch", "train_task_loss", "mean_source_val_acc", "disc_val_acc", "unseen_acc", "lr_task", "lr_disc"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.history
            .records
            .iter()
            .map(|r| {
                vec![
                    r.epoch.to_string(),
                    f(r.train_task_loss),
                    f(r.mean_source_val_acc()),
                    opt(r.disc_val_acc),
                    opt(r.unseen_acc),
                    f(r.lr_task),
                    f(r.lr_disc),
                ]
            })
            .collect()
    }
}

fn matrix_rows(kind: &str, seed: Option<u64>, m: &DivergenceMatrix, out: &mut Vec<Vec<String>>) {
    for (i, a) in m.labels.iter().enumerate() {
        for (j, b) in m.labels.iter().enumerate() {
            out.push(vec![
                kind.into(),
                seed.map(|s| s.to_string()).unwrap_or_default(),
                a.clone(),
                b.clone(),
                f(m.values[i][j]),
            ]);
        }
    }
}

impl Tabular for DivergenceReport {
    const STEM: &'static str = "divergence";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "seed", "row", "col", "value"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        matrix_rows("raw", None, &self.raw, &mut out);
        for s in &self.encoded {
            matrix_rows("erm", Some(s.seed), &s.erm, &mut out);
            matrix_rows("g2dm", Some(s.seed), &s.g2dm, &mut out);
            let delta = DivergenceMatrix {
                labels: s.delta.labels.clone(),
                values: s.delta.delta.clone(),
                noise_tolerance: 0.0,
                clamp_events: 0,
            };
            matrix_rows("delta", Some(s.seed), &delta, &mut out);
        }
        out
    }
}

/// Heat-map CSV of one matrix: a header of labels, then one row per label.
pub fn heatmap_csv(labels: &[String], values: &[Vec<f64>]) -> String {
    let mut s = String::from("domain");
    for l in labels {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for (l, row) in labels.iter().zip(values) {
        s.push_str(l);
        for v in row {
            s.push(',');
            s.push_str(&f(*v));
        }
        s.push('\n');
    }
    s
}

impl Tabular for AuditReport {
    const STEM: &'static str = "audit";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "seed", "pi_star", "gamma", "epsilon", "lambda", "lhs", "rhs", "holds", "privileged"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut out = vec![vec![
            "hull".into(),
            String::new(),
            String::new(),
            String::new(),
            f(self.hull.epsilon),
            String::new(),
            f(self.hull.fraction_satisfied),
            f(self.hull.tau),
            self.hull.satisfied.to_string(),
            "false".into(),
        ]];
        for s in &self.audits {
            let a = &s.audit;
            let pi: Vec<String> = a.pi_star.as_slice().iter().map(|p| f(*p)).collect();
            out.push(vec![
                "bound".into(),
                s.seed.to_string(),
                pi.join(";"),
                f(a.gamma),
                f(a.epsilon),
                f(a.lambda),
                f(a.lhs),
                f(a.rhs),
                a.holds(0.0).to_string(),
                a.privileged.to_string(),
            ]);
        }
        out
    }
}

impl Tabular for AblationTable {
    const STEM: &'static str = "ablation";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["unseen", "criterion", "removed", "sources", "per_seed", "mean"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.unseen.clone(),
                    self.criterion.name().into(),
                    r.removed.clone().unwrap_or_else(|| "none".into()),
                    r.sources.join(";"),
                    r.per_seed.iter().map(|a| f(*a)).collect::<Vec<_>>().join(";"),
                    f(r.mean),
                ]
            })
            .collect()
    }
}

impl Tabular for SweepTable {
    const STEM: &'static str = "sweep_rp";

    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["unseen", "criterion", "projection_size", "per_seed", "mean"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.unseen.clone(),
                    self.criterion.name().into(),
                    r.size.to_string(),
                    r.per_seed.iter().map(|a| f(*a)).collect::<Vec<_>>().join(";"),
                    f(r.mean),
                ]
            })
            .collect()
    }
}

/// Human-readable summary of a leave-one-domain-out result.
pub fn summary(result: &ExperimentResult) -> String {
    let mut s = format!("config {} (version {})\n", &result.config_hash[..12.min(result.config_hash.len())], result.code_version);
    for a in &result.aggregates {
        s.push_str(&format!(
            "{:<16} {:<5} {:<12} {:.4} +- {:.4} (n={})\n",
            a.unseen,
            a.method.name(),
            a.criterion.name(),
            a.mean,
            a.std,
            a.n
        ));
    }
    s
}
