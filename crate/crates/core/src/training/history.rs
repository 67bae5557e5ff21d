use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Metrics logged after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean task loss over the epoch's iterations.
    pub train_task_loss: f64,
    /// Validation accuracy per source, in source order.
    pub source_val_acc: Vec<f64>,
    /// Mean training loss per discriminator; empty for ERM.
    pub disc_losses: Vec<f64>,
    /// Mean balanced accuracy of the discriminators on source validation data.
    pub disc_val_acc: Option<f64>,
    /// Accuracy on the unseen domain, when one was supplied.
    pub unseen_acc: Option<f64>,
    pub lr_task: f64,
    pub lr_disc: f64,
}

impl EpochRecord {
    pub fn mean_source_val_acc(&self) -> f64 {
        math::mean(&self.source_val_acc)
    }
}

/// Append-only per-epoch log of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricHistory {
    pub records: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl MetricHistory {
    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Model-selection rule applied to a [`MetricHistory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Highest mean source validation accuracy.
    SourceAcc,
    /// Lowest training task loss.
    SourceLoss,
    /// Highest unseen-domain accuracy (semi-privileged).
    UnseenAcc,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::SourceAcc, Criterion::SourceLoss, Criterion::UnseenAcc];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::SourceAcc => "source_acc",
            Criterion::SourceLoss => "source_loss",
            Criterion::UnseenAcc => "unseen_acc",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        Criterion::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Whether the rule looks at unseen-domain data.
    pub fn is_privileged(self) -> bool {
        matches!(self, Criterion::UnseenAcc)
    }
}
