//! Warmup learning-rate schedule `min(1/sqrt(phi), phi/sqrt(psi^3)) / sqrt(c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn lr_at_step(phi: u64, psi: u64, c: f64) -> Result<f64> {
    if phi < 1 {
        return Err(Error::InvalidConfig(format!(
            "schedule step must be >= 1, got {phi}"
        )));
    }
    if psi < 1 || c <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "warmup {psi} and scale {c} must be positive"
        )));
    }
    let (phi, psi) = (phi as f64, psi as f64);
    Ok((1.0 / phi.sqrt()).min(phi / psi.powf(1.5)) / c.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub scale: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            warmup_steps: 10_000,
            scale: 100.0,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, phi: u64) -> Result<f64> {
        lr_at_step(phi, self.warmup_steps, self.scale)
    }
}
