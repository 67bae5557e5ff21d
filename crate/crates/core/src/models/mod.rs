//! Encoder, task classifier and one-vs-all domain discriminators.

mod bundle;
mod layers;
mod losses;
mod projection;

pub(crate) use bundle::{argmax_rows, fraction_equal};
pub use bundle::{Architecture, BundleOutput, DomainDiscriminator, ModelBundle, ModelConfig, ProjectionLayer};
pub use layers::{Activation, Linear, Mlp, Mode};
pub use losses::{ova_labels, smoothed_cross_entropy, target_entropy};
pub use projection::{init_projection, RandomProjection, NORM_TOLERANCE};
