use serde::{Deserialize, Serialize};

use super::AlgorithmId;
use crate::nn::{even_milestones, Schedule, ScheduleKind};
use crate::protocol::space::names;
use crate::protocol::{HpValue, HyperparameterAssignment};
use crate::{Error, Result};

/// Hyperparameters a learner reads from a sampled assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerHyperparams {
    pub epochs: usize,
    pub lr: f64,
    pub scheduler: ScheduleKind,
    pub num_milestones: Option<usize>,
    pub lr_decay: Option<f64>,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub kd_temperature: Option<f64>,
    pub kd_lambda: Option<f64>,
    pub split_ratio: Option<f64>,
    pub aux_lambda: Option<f64>,
    pub exemplar_batch_size: Option<usize>,
}

/// Fixed first-task training values, shared by every algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitHyperparams {
    pub epochs: usize,
    pub lr: f64,
    /// Only used when the sampled scheduler is StepLR.
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub weight_decay: f64,
    /// Multiplier applied to `epochs` and `milestones` to bring full-scale
    /// schedules down to desk scale.
    pub init_scale: f64,
}

impl Default for InitHyperparams {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.1,
            milestones: vec![60, 120, 170],
            lr_decay: 0.1,
            weight_decay: 0.0005,
            init_scale: 0.1,
        }
    }
}

impl InitHyperparams {
    pub fn scaled_epochs(&self) -> usize {
        ((self.epochs as f64 * self.init_scale).round() as usize).max(1)
    }

    pub fn scaled_milestones(&self) -> Vec<usize> {
        let epochs = self.scaled_epochs();
        let mut out: Vec<usize> = self
            .milestones
            .iter()
            .map(|&m| (m as f64 * self.init_scale).round() as usize)
            .filter(|&m| m > 0 && m < epochs)
            .collect();
        out.dedup();
        out
    }

    pub fn schedule(&self, kind: ScheduleKind) -> Result<Schedule> {
        match kind {
            ScheduleKind::Step => Schedule::step(self.lr, self.scaled_epochs(), self.scaled_milestones(), self.lr_decay),
            ScheduleKind::Cosine => Schedule::cosine(self.lr, self.scaled_epochs()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return Err(Error::config(format!("init_scale must be > 0, got {}", self.init_scale)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("init weight_decay must be >= 0"));
        }
        self.schedule(ScheduleKind::Step)?;
        Ok(())
    }
}

fn required<'a>(a: &'a HyperparameterAssignment, name: &str, algo: AlgorithmId) -> Result<&'a HpValue> {
    a.get(name).ok_or_else(|| {
        Error::config(format!("{algo} needs hyperparameter '{name}' but the assignment lacks it"))
    })
}

fn real(v: &HpValue, name: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::config(format!("hyperparameter '{name}' must be numeric, got {v}")))
}

fn count(v: &HpValue, name: &str) -> Result<usize> {
    v.as_usize()
        .ok_or_else(|| Error::config(format!("hyperparameter '{name}' must be a non-negative integer, got {v}")))
}

impl LearnerHyperparams {
    /// Reads the values `algo` needs. Returns them together with the names of
    /// assignment entries this algorithm ignores.
    pub fn from_assignment(algo: AlgorithmId, a: &HyperparameterAssignment) -> Result<(Self, Vec<String>)> {
        let mut used: Vec<&str> = vec![
            names::EPOCHS,
            names::LR,
            names::LR_SCHEDULER,
            names::BATCH_SIZE,
            names::WEIGHT_DECAY,
        ];
        let epochs = count(required(a, names::EPOCHS, algo)?, names::EPOCHS)?;
        let lr = real(required(a, names::LR, algo)?, names::LR)?;
        let scheduler_v = required(a, names::LR_SCHEDULER, algo)?;
        let scheduler = ScheduleKind::parse(scheduler_v.as_str().unwrap_or_default())?;
        let batch_size = count(required(a, names::BATCH_SIZE, algo)?, names::BATCH_SIZE)?;
        let weight_decay = real(required(a, names::WEIGHT_DECAY, algo)?, names::WEIGHT_DECAY)?;

        let (num_milestones, lr_decay) = if scheduler == ScheduleKind::Step {
            used.extend([names::NUM_MILESTONES, names::LR_DECAY]);
            (
                Some(count(required(a, names::NUM_MILESTONES, algo)?, names::NUM_MILESTONES)?),
                Some(real(required(a, names::LR_DECAY, algo)?, names::LR_DECAY)?),
            )
        } else {
            (None, None)
        };

        let mut hp = LearnerHyperparams {
            epochs,
            lr,
            scheduler,
            num_milestones,
            lr_decay,
            batch_size,
            weight_decay,
            kd_temperature: None,
            kd_lambda: None,
            split_ratio: None,
            aux_lambda: None,
            exemplar_batch_size: None,
        };
        if algo.uses_kd() {
            used.extend([names::KD_TEMPERATURE, names::KD_LAMBDA]);
            hp.kd_temperature = Some(real(required(a, names::KD_TEMPERATURE, algo)?, names::KD_TEMPERATURE)?);
            hp.kd_lambda = Some(real(required(a, names::KD_LAMBDA, algo)?, names::KD_LAMBDA)?);
        }
        if algo == AlgorithmId::Bic {
            used.push(names::SPLIT_RATIO);
            hp.split_ratio = Some(real(required(a, names::SPLIT_RATIO, algo)?, names::SPLIT_RATIO)?);
        }
        if algo == AlgorithmId::Der {
            used.push(names::AUX_LAMBDA);
            hp.aux_lambda = Some(real(required(a, names::AUX_LAMBDA, algo)?, names::AUX_LAMBDA)?);
        }
        if algo.uses_memory() {
            if let Some(v) = a.get(names::EXEMPLAR_BATCH_SIZE) {
                used.push(names::EXEMPLAR_BATCH_SIZE);
                hp.exemplar_batch_size = Some(count(v, names::EXEMPLAR_BATCH_SIZE)?);
            }
        }
        hp.validate()?;

        let inert = a
            .values
            .keys()
            .filter(|k| !used.contains(&k.as_str()))
            .cloned()
            .collect();
        Ok((hp, inert))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("lr must be > 0 and weight_decay >= 0"));
        }
        if self.kd_temperature.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::config("kd_temperature must be > 0"));
        }
        if self.kd_lambda.is_some_and(|l| !(l >= 0.0)) || self.aux_lambda.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::config("loss weights must be >= 0"));
        }
        if self.split_ratio.is_some_and(|r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::config("split_ratio must be in (0, 1)"));
        }
        if self.exemplar_batch_size == Some(0) {
            return Err(Error::config("exemplar_batch_size must be >= 1"));
        }
        Ok(())
    }

    /// Schedule for tasks after the first.
    pub fn schedule(&self) -> Result<Schedule> {
        match self.scheduler {
            ScheduleKind::Step => Schedule::step(
                self.lr,
                self.epochs,
                even_milestones(self.epochs, self.num_milestones.unwrap_or(0)),
                self.lr_decay.unwrap_or(1.0),
            ),
            ScheduleKind::Cosine => Schedule::cosine(self.lr, self.epochs),
        }
    }
}
