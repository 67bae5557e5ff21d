use alloc::format;

use crate::error::{argument, Error, Result};
use crate::math;

/// Lower bound of the nadir point.
pub const NADIR_FLOOR: f64 = 1e-8;

/// `η = max(slack · max(losses), NADIR_FLOOR)`.
pub fn nadir(losses: &[f64], slack: f64) -> f64 {
    let worst = losses.iter().cloned().fold(0.0f64, f64::max);
    (slack * worst).max(NADIR_FLOOR)
}

/// Loss the encoder minimizes against one discriminator: the geometric mean
/// probability that the discriminator assigns to the correct domain label.
pub fn confusion_loss(discriminator_loss: f64) -> f64 {
    math::exp(-discriminator_loss)
}

/// Negative log hypervolume `−Σ log(η − l_k)` with `η` from [`nadir`].
pub fn hypervolume_aggregate(losses: &[f64], slack: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(argument("hypervolume of zero losses"));
    }
    if !(slack > 1.0) {
        return Err(argument(format!("nadir slack {slack} must exceed 1")));
    }
    if let Some(l) = losses.iter().find(|l| !(**l >= 0.0)) {
        return Err(argument(format!("hypervolume needs non-negative losses, got {l}")));
    }
    let eta = nadir(losses, slack);
    let mut v = 0.0;
    for &l in losses {
        if l >= eta {
            return Err(Error::Numeric(format!("loss {l} reaches the nadir {eta}")));
        }
        v -= math::ln(eta - l);
    }
    Ok(v)
}
