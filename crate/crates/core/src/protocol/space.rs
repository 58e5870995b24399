//! Hyperparameter spaces and sampled assignments.

use std::fmt;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// Hyperparameter names the learners understand.
pub mod names {
    pub const EPOCHS: &str = "epochs";
    pub const LR: &str = "lr";
    pub const NUM_MILESTONES: &str = "num_milestones";
    pub const LR_DECAY: &str = "lr_decay";
    pub const BATCH_SIZE: &str = "batch_size";
    pub const WEIGHT_DECAY: &str = "weight_decay";
    pub const LR_SCHEDULER: &str = "lr_scheduler";
    pub const KD_TEMPERATURE: &str = "kd_temperature";
    pub const KD_LAMBDA: &str = "kd_lambda";
    pub const SPLIT_RATIO: &str = "split_ratio";
    pub const AUX_LAMBDA: &str = "aux_lambda";
    pub const EXEMPLAR_BATCH_SIZE: &str = "exemplar_batch_size";

    /// Keys of algorithms without a native learner. They are accepted in
    /// spaces and handed to external trainers untouched.
    pub const PASS_THROUGH: &[&str] = &[
        "fe_lambda",
        "beta1",
        "beta2",
        "num_proxy",
        "post_ft_epochs",
        "post_ft_lr",
        "energy_weight",
        "logit_alignment",
    ];

    pub const NATIVE: &[&str] = &[
        EPOCHS,
        LR,
        NUM_MILESTONES,
        LR_DECAY,
        BATCH_SIZE,
        WEIGHT_DECAY,
        LR_SCHEDULER,
        KD_TEMPERATURE,
        KD_LAMBDA,
        SPLIT_RATIO,
        AUX_LAMBDA,
        EXEMPLAR_BATCH_SIZE,
    ];

    pub fn is_known(name: &str) -> bool {
        NATIVE.contains(&name) || PASS_THROUGH.contains(&name)
    }
}

/// One hyperparameter value. Integers and reals are kept apart so that a
/// JSON `5` stays `5` on the way back out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Real(f64),
    Text(String),
}

impl HpValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            HpValue::Int(i) => Some(i as f64),
            HpValue::Real(r) => Some(r),
            HpValue::Text(_) => None,
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        match *self {
            HpValue::Int(i) if i >= 0 => Some(i as usize),
            HpValue::Real(r) if r >= 0.0 && r.fract() == 0.0 => Some(r as usize),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HpValue::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Int(i) => write!(f, "{i}"),
            HpValue::Real(r) => write!(f, "{r}"),
            HpValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Int,
    Real,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceEntry {
    pub name: String,
    pub values: Vec<HpValue>,
    pub kind: ValueKind,
}

/// Ordered list of `(name, value set)` entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HyperparameterSpace {
    entries: Vec<SpaceEntry>,
}

impl HyperparameterSpace {
    pub fn new(sets: impl IntoIterator<Item = (String, Vec<HpValue>)>) -> Result<Self> {
        let mut entries: Vec<SpaceEntry> = Vec::new();
        for (name, values) in sets {
            if entries.iter().any(|e| e.name == name) {
                return Err(Error::config(format!("hyperparameter '{name}' listed twice")));
            }
            if !names::is_known(&name) {
                return Err(Error::config(format!("unknown hyperparameter '{name}'")));
            }
            if values.is_empty() {
                return Err(Error::config(format!("hyperparameter '{name}' has an empty value set")));
            }
            let kind = infer_kind(&name, &values)?;
            entries.push(SpaceEntry { name, values, kind });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[SpaceEntry] {
        &self.entries
    }

    /// Number of entries (`K`).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, a: &HyperparameterAssignment) -> bool {
        a.values.len() == self.entries.len()
            && self
                .entries
                .iter()
                .all(|e| a.values.get(&e.name).is_some_and(|v| e.values.contains(v)))
    }

    pub fn to_map(&self) -> IndexMap<String, Vec<HpValue>> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.values.clone()))
            .collect()
    }
}

fn infer_kind(name: &str, values: &[HpValue]) -> Result<ValueKind> {
    let texts = values.iter().filter(|v| matches!(v, HpValue::Text(_))).count();
    if texts == values.len() {
        return Ok(ValueKind::Categorical);
    }
    if texts > 0 {
        return Err(Error::config(format!(
            "hyperparameter '{name}' mixes text and numeric values"
        )));
    }
    if let Some(bad) = values.iter().find(|v| v.as_f64().is_some_and(|x| !x.is_finite())) {
        return Err(Error::config(format!("hyperparameter '{name}' has non-finite value {bad}")));
    }
    Ok(if values.iter().all(|v| matches!(v, HpValue::Int(_))) {
        ValueKind::Int
    } else {
        ValueKind::Real
    })
}

/// One sampled tuple `H_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterAssignment {
    /// Sampling index `r` (0-based).
    pub index: usize,
    pub values: IndexMap<String, HpValue>,
}

impl HyperparameterAssignment {
    pub fn get(&self, name: &str) -> Option<&HpValue> {
        self.values.get(name)
    }

    /// Compact `name=value` rendering in space order.
    pub fn describe(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Draws each entry independently and uniformly, using the stream
/// `derive(base_seed, "tuning-sample", [r])`.
pub fn sample_assignment(space: &HyperparameterSpace, r: usize, base_seed: u64) -> HyperparameterAssignment {
    let mut rng = seed::derived_rng(base_seed, "tuning-sample", &[r as u64]);
    let values = space
        .entries
        .iter()
        .map(|e| {
            let k = rng.random_range(0..e.values.len());
            (e.name.clone(), e.values[k].clone())
        })
        .collect();
    HyperparameterAssignment { index: r, values }
}
