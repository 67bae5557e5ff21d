//! Synthetic domains under covariate shift.
//!
//! Every family first draws a latent point together with its class label and
//! only then renders the point through a domain-specific transform
//! (per-axis scaling, rotation in the first two coordinates, translation and
//! additive noise). Labels therefore never depend on the domain.

mod dataset;
mod family;
mod meta;

pub use dataset::{split, Dataset, DomainSample, LabeledExample};
pub use family::{sample_examples, sample_latent, DomainSpec, Family, Latent};
pub use meta::{sample_domain, sample_mixture, MetaDistribution, MixtureWeights, SIMPLEX_TOLERANCE};
