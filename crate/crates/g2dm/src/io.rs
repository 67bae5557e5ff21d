//! File formats: labeled samples as CSV, checkpoints and reports as JSON,
//! training histories as JSON lines.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use g2dm_core::domains::DomainSample;
use g2dm_core::engine::Tensor;
use g2dm_core::models::ModelBundle;
use g2dm_core::training::{EpochRecord, MetricHistory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

pub const CHECKPOINT_FORMAT: &str = "g2dm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Read samples with header `domain,label,f0,f1,...`, one group per domain id
/// in ascending order.
pub fn read_samples(path: &Path) -> Result<Vec<DomainSample>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    for (i, required) in ["domain", "label"].iter().enumerate() {
        if headers.get(i) != Some(required) {
            return Err(Error::parse(path, 1, format!("column {} must be '{required}'", i + 1)));
        }
    }
    let dim = headers.len() - 2;
    if dim == 0 {
        return Err(Error::parse(path, 1, "no feature columns"));
    }
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::parse(path, line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        let int = |i: usize| {
            record[i].parse::<usize>().map_err(|_| Error::parse(path, line, format!("{}: '{}' is not an integer", &headers[i], &record[i])))
        };
        let (domain, label) = (int(0)?, int(1)?);
        let entry = groups.entry(domain).or_default();
        for i in 2..record.len() {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| Error::parse(path, line, format!("{}: '{}' is not a number", &headers[i], &record[i])))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("{}: non-finite value", &headers[i])));
            }
            entry.0.push(v);
        }
        entry.1.push(label);
    }
    if groups.is_empty() {
        return Err(Error::parse(path, 2, "no data rows"));
    }
    groups
        .into_iter()
        .map(|(domain, (data, labels))| Ok(DomainSample::new(domain, Tensor::matrix(labels.len(), dim, data)?, labels)?))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Write samples in the format read by [`read_samples`]. Floats are written
/// in shortest round-trip form.
pub fn write_samples(path: &Path, samples: &[DomainSample]) -> Result<()> {
    let dim = samples.first().map(DomainSample::dim).ok_or_else(|| argument("no samples to write"))?;
    let mut out = String::from("domain,label");
    for j in 0..dim {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for s in samples {
        if s.dim() != dim {
            return Err(argument(format!("domain {} has {} features, expected {dim}", s.domain, s.dim())));
        }
        for i in 0..s.len() {
            out.push_str(&format!("{},{}", s.domain, s.labels[i]));
            for v in s.features.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    write_file(path, out.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    bundle: ModelBundle,
}

pub fn save_checkpoint(path: &Path, bundle: &ModelBundle) -> Result<()> {
    write_json(path, &Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, bundle: bundle.clone() })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let c: Checkpoint = read_json(path)?;
    if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(Error::parse(path, 1, format!("unsupported checkpoint {} v{}", c.format, c.version)));
    }
    Ok(c.bundle)
}

/// One JSON object per epoch.
pub fn write_history(path: &Path, history: &MetricHistory) -> Result<()> {
    let mut out = Vec::new();
    for r in &history.records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    write_file(path, &out)
}

pub fn read_history(path: &Path) -> Result<MetricHistory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut history = MetricHistory::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: EpochRecord = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        history.push(record);
    }
    Ok(history)
}
