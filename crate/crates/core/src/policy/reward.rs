use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Penalty for a wrong prediction.
    pub tau: f64,
    /// Use the squared keep ratio instead of the linear one.
    pub squared: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            tau: 1.5,
            squared: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::Config(format!(
                "tau {} must be finite and non-negative",
                self.tau
            )));
        }
        Ok(())
    }
}

/// `1 − (k/N)²` (or `1 − k/N`) when correct, `−τ` otherwise.
///
/// Panics if `n == 0` or `keep_count > n`.
pub fn reward(keep_count: usize, n: usize, correct: bool, cfg: &RewardConfig) -> f64 {
    assert!(n >= 1 && keep_count <= n, "keep count {keep_count} of {n}");
    if !correct {
        return -cfg.tau;
    }
    let ratio = keep_count as f64 / n as f64;
    if cfg.squared {
        1.0 - ratio * ratio
    } else {
        1.0 - ratio
    }
}
