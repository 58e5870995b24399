use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    #[serde(rename = "StepLR")]
    Step,
    #[serde(rename = "Cosine")]
    Cosine,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "StepLR" | "step" => Ok(ScheduleKind::Step),
            "Cosine" | "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::config(format!("unknown LR scheduler '{other}'"))),
        }
    }
}

/// Per-epoch learning rate.
///
/// * step: `base_lr * decay^m` where `m` counts milestones `<= epoch`
/// * cosine: `base_lr * (1 + cos(pi * epoch / epochs)) / 2`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub epochs: usize,
    pub milestones: Vec<usize>,
    pub decay: f64,
}

impl Schedule {
    pub fn step(base_lr: f64, epochs: usize, milestones: Vec<usize>, decay: f64) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Step,
            base_lr,
            epochs,
            milestones,
            decay,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cosine(base_lr: f64, epochs: usize) -> Result<Self> {
        let s = Self {
            kind: ScheduleKind::Cosine,
            base_lr,
            epochs,
            milestones: Vec::new(),
            decay: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::config(format!("base learning rate must be > 0, got {}", self.base_lr)));
        }
        if self.epochs == 0 {
            return Err(Error::config("schedule needs at least one epoch"));
        }
        if self.kind == ScheduleKind::Step {
            if !(self.decay > 0.0 && self.decay <= 1.0) {
                return Err(Error::config(format!("LR decay must be in (0, 1], got {}", self.decay)));
            }
            if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!(
                    "milestones must be strictly increasing: {:?}",
                    self.milestones
                )));
            }
            if self.milestones.last().is_some_and(|&m| m >= self.epochs) {
                return Err(Error::config(format!(
                    "milestones {:?} must lie below {} epochs",
                    self.milestones, self.epochs
                )));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.epochs {
            return Err(Error::contract(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.epochs
            )));
        }
        Ok(match self.kind {
            ScheduleKind::Step => {
                let passed = self.milestones.iter().filter(|&&m| m <= epoch).count() as i32;
                // dividing by the inverse factor keeps decimal plateaus exact
                // for the usual decays (0.1 -> 0.01 rather than 0.010000000000000002)
                self.base_lr / (1.0 / self.decay).powi(passed)
            }
            ScheduleKind::Cosine => {
                self.base_lr * 0.5 * (1.0 + (PI * epoch as f64 / self.epochs as f64).cos())
            }
        })
    }
}

/// `count` milestones spread evenly over `epochs`: `floor(epochs * i / (count + 1))`
/// for `i = 1..=count`, dropping zeros and duplicates.
pub fn even_milestones(epochs: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count)
        .map(|i| epochs * i / (count + 1))
        .filter(|&m| m > 0 && m < epochs)
        .collect();
    out.dedup();
    out
}
