use alloc::format;

use super::OptimState;
use crate::error::{argument, Result};

/// Linear warm-up from `floor_ratio·base_lr` at iteration 0 to `base_lr` at
/// iteration `nw` and beyond.
pub fn warmup_lr(iteration: i64, nw: u64, base_lr: f64, floor_ratio: f64) -> Result<f64> {
    if iteration < 0 {
        return Err(argument(format!("negative iteration {iteration}")));
    }
    if nw == 0 {
        return Err(argument("warm-up length must be at least one iteration"));
    }
    if !(floor_ratio > 0.0 && floor_ratio <= 1.0) {
        return Err(argument(format!("warm-up floor ratio {floor_ratio} outside (0, 1]")));
    }
    let it = iteration as u64;
    if it >= nw {
        return Ok(base_lr);
    }
    let frac = it as f64 / nw as f64;
    Ok(base_lr * (floor_ratio + (1.0 - floor_ratio) * frac))
}

/// Reduce `state.lr` by `factor` after `patience` consecutive calls without
/// improvement of a lower-is-better metric. Returns whether a decay happened.
pub fn plateau_decay(state: &mut OptimState, epoch_metric: f64, patience: u32, factor: f64) -> Result<bool> {
    if !(factor > 0.0 && factor < 1.0) {
        return Err(argument(format!("decay factor {factor} outside (0, 1)")));
    }
    if patience == 0 {
        return Err(argument("patience must be at least 1"));
    }
    if epoch_metric < state.best_metric {
        state.best_metric = epoch_metric;
        state.plateau_counter = 0;
        return Ok(false);
    }
    state.plateau_counter += 1;
    if state.plateau_counter >= patience {
        state.lr *= factor;
        state.plateau_counter = 0;
        return Ok(true);
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(warmup_lr(0, 500, 0.01, 1e-4).unwrap(), 0.01 * 1e-4);
        assert_eq!(warmup_lr(500, 500, 0.01, 1e-4).unwrap(), 0.01);
        assert_eq!(warmup_lr(10_000, 500, 0.01, 1e-4).unwrap(), 0.01);
        let mid = warmup_lr(250, 500, 0.01, 1e-4).unwrap();
        assert!((mid - 0.01 * (1e-4 + (1.0 - 1e-4) * 0.5)).abs() < 1e-18);
        assert!((warmup_lr(0, 500, 0.01, 1e-4).unwrap() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn ramp_rejects_bad_arguments() {
        assert!(warmup_lr(-1, 10, 0.1, 0.1).is_err());
        assert!(warmup_lr(0, 0, 0.1, 0.1).is_err());
        assert!(warmup_lr(0, 10, 0.1, 0.0).is_err());
    }

    #[test]
    fn decays_after_patience_non_improvements() {
        let mut st = OptimState::new(0.01);
        let decays: Vec<bool> = [1.0, 1.1, 1.2]
            .iter()
            .map(|m| plateau_decay(&mut st, *m, 2, 0.1).unwrap())
            .collect();
        assert_eq!(decays, vec![false, false, true]);
        assert!((st.lr - 0.001).abs() < 1e-15);
        assert_eq!(st.plateau_counter, 0);
    }

    #[test]
    fn improving_metrics_keep_lr() {
        let mut st = OptimState::new(0.01);
        for m in [5.0, 4.0, 3.0, 2.0, 1.0] {
            assert!(!plateau_decay(&mut st, m, 1, 0.5).unwrap());
        }
        assert_eq!(st.lr, 0.01);
        assert_eq!(st.best_metric, 1.0);
    }

    #[test]
    fn half_factor() {
        let mut st = OptimState::new(0.01);
        plateau_decay(&mut st, 1.0, 1, 0.5).unwrap();
        assert!(plateau_decay(&mut st, 1.0, 1, 0.5).unwrap());
        assert!((st.lr - 0.005).abs() < 1e-15);
    }
}
