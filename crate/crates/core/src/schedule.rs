//! Three-phase learning-rate function: linear warmup, constant plateau,
//! then a descending course (linear or exponential).
//!
//! Default magnitudes (1e-5 -> 1e-3 -> 1e-6) are artifact choices; the
//! shape is the contract, not the numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayShape {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lr_start: f64,
    pub lr_max: f64,
    pub lr_end: f64,
    pub warmup_steps: u64,
    pub plateau_steps: u64,
    pub decay_steps: u64,
    pub decay_shape: DecayShape,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            lr_start: 1e-5,
            lr_max: 1e-3,
            lr_end: 1e-6,
            warmup_steps: 1000,
            plateau_steps: 4000,
            decay_steps: 5000,
            decay_shape: DecayShape::Linear,
        }
    }
}

/// Validated schedule; construction is the only place invariants are
/// checked, `lr_at` never fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    cfg: ScheduleConfig,
}

impl Schedule {
    pub fn new(cfg: ScheduleConfig) -> Result<Self> {
        if !(cfg.lr_start > 0.0 && cfg.lr_max > 0.0 && cfg.lr_end > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if cfg.lr_start > cfg.lr_max {
            return Err(Error::invalid("lr_start must not exceed lr_max"));
        }
        if cfg.lr_end > cfg.lr_max {
            return Err(Error::invalid("lr_end must not exceed lr_max"));
        }
        if cfg.warmup_steps + cfg.plateau_steps + cfg.decay_steps == 0 {
            return Err(Error::invalid("schedule must have at least one step"));
        }
        Ok(Schedule { cfg })
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.cfg
    }

    pub fn total_steps(&self) -> u64 {
        self.cfg.warmup_steps + self.cfg.plateau_steps + self.cfg.decay_steps
    }

    /// Learning rate at a step. Steps past the end clamp to `lr_end`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let c = &self.cfg;
        if step < c.warmup_steps {
            let t = step as f64 / c.warmup_steps as f64;
            return c.lr_start + (c.lr_max - c.lr_start) * t;
        }
        let step = step - c.warmup_steps;
        if step < c.plateau_steps {
            return c.lr_max;
        }
        let step = step - c.plateau_steps;
        if step < c.decay_steps {
            let u = step as f64 / c.decay_steps as f64;
            return match c.decay_shape {
                DecayShape::Linear => c.lr_max + (c.lr_end - c.lr_max) * u,
                // rate chosen so lr(decay end) = lr_end exactly
                DecayShape::Exponential => c.lr_max * (c.lr_end / c.lr_max).powf(u),
            };
        }
        c.lr_end
    }

    /// Dense (step, rate) table of the first `total_steps` steps.
    pub fn emit_curve(&self, total_steps: u64) -> Vec<(u64, f64)> {
        (0..total_steps).map(|s| (s, self.lr_at(s))).collect()
    }
}
