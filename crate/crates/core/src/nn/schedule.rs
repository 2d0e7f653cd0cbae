use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Exponentially decaying learning rate, `initial_lr * decay^epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSchedule {
    pub initial_lr: f64,
    pub decay: f64,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 0.003,
            decay: 0.9,
        }
    }
}

impl SgdSchedule {
    pub fn new(initial_lr: f64, decay: f64) -> Result<Self> {
        let s = Self { initial_lr, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(invalid!(
                "initial learning rate must be positive, got {}",
                self.initial_lr
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid!("decay must lie in (0, 1], got {}", self.decay));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let e = i32::try_from(epoch).unwrap_or(i32::MAX);
        // floor keeps the rate strictly positive once decay^epoch underflows
        (self.initial_lr * self.decay.powi(e)).max(f64::MIN_POSITIVE)
    }
}
