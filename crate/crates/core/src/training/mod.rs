//! Alternating minimax training and the ERM baseline.
//!
//! One G2DM iteration draws `m` examples from every source, then
//!
//! 1. steps every discriminator `D_k` on its one-vs-all loss `L_k`
//!    (encoder outputs treated as constants),
//! 2. computes the encoder gradient of `α·L_C + (1 − α)·A` with the
//!    classifier as it was before this iteration,
//! 3. steps the classifier on `L_C`,
//! 4. steps the encoder with the gradient from (2).
//!
//! `A` is `−Σ L_k` under [`Aggregation::Sum`] and the negative log
//! hypervolume of the confusion losses `exp(−L_k)` under
//! [`Aggregation::Hypervolume`].

mod config;
mod history;
mod hypervolume;
mod steps;
mod trainer;

pub use config::{Aggregation, TrainConfig};
pub use history::{Criterion, EpochRecord, MetricHistory};
pub use hypervolume::{confusion_loss, hypervolume_aggregate, nadir, NADIR_FLOOR};
pub use steps::{
    classifier_update, discriminator_accuracy, discriminator_update, encoder_gradient, encoder_update,
    DiscriminatorStep, EncoderLoss, EncoderObjective, SourceBatch,
};
pub use trainer::{train_erm, train_erm_observed, train_g2dm, train_g2dm_observed, ErmSampling, SourceData, TrainOutcome};
