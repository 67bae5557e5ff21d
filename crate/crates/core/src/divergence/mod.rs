//! Empirical domain discrepancies.
//!
//! Divergences are proxy A-distances `2(1 − 2ε̂)`, where `ε̂` is the
//! cross-validated error of a classifier trained to tell two samples apart.

mod audit;
mod estimator;
mod heatmap;
mod hull;
mod matrix;
mod ova;

pub use audit::{bound_audit, AuditConfig, BoundAudit};
pub use estimator::{proxy_a_distance, EstimatorConfig, PadEstimate, Probe};
pub use heatmap::{heatmap_delta, HeatmapDelta};
pub use hull::{draw_mixture, hull_bound_check, mixture_divergence, HullPair, HullReport};
pub use matrix::{encoded_pairwise_matrix, pairwise_matrix, DivergenceMatrix};
pub use ova::ova_decomposition_check;

/// Largest value a proxy A-distance can take.
pub const MAX_DIVERGENCE: f64 = 2.0;
