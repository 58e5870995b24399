//! Experiment configuration: one JSON document describing data, scenario,
//! hyperparameter space, protocol shape and learner settings. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bridge::{ExternalRunner, ExternalSpec};
use crate::data::{
    disjoint_class_split, load_cifar_binary, load_csv, random_project, synth_gaussians, CifarVariant,
    LabeledDataset, SplitPair,
};
use crate::learners::{AlgorithmId, LearnerSettings};
use crate::protocol::{HpValue, HyperparameterSpace, NativeRunner, ProtocolSettings, TrialRunner};
use crate::scenario::{ScenarioSpec, DEFAULT_VAL_FRACTION};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    pub out_dim: usize,
    pub seed: u64,
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Source {
    Synthetic {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
        #[serde(default)]
        projection: Option<Projection>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        projection: Option<Projection>,
    },
    Cifar {
        path: PathBuf,
        variant: CifarVariant,
        #[serde(default)]
        projection: Option<Projection>,
    },
}

impl Source {
    /// Loads the dataset; relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<LabeledDataset> {
        let (data, projection) = match self {
            Source::Synthetic {
                num_classes,
                dim,
                per_class,
                separation,
                seed,
                projection,
            } => (synth_gaussians(*num_classes, *dim, *per_class, *separation, *seed)?, projection),
            Source::Csv { path, projection } => (load_csv(&base_dir.join(path))?, projection),
            Source::Cifar {
                path,
                variant,
                projection,
            } => (load_cifar_binary(&base_dir.join(path), *variant)?, projection),
        };
        match projection {
            Some(p) => random_project(&data, p.out_dim, p.seed),
            None => Ok(data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub source: Source,
    #[serde(default = "half")]
    pub first_fraction: f64,
    pub seed: u64,
}

fn half() -> f64 {
    0.5
}

/// Either one source split into disjoint halves, or two explicit sources.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Source>,
}

impl DataPlan {
    pub fn load(&self, base_dir: &Path) -> Result<SplitPair> {
        match (&self.split, &self.tuning, &self.evaluation) {
            (Some(plan), None, None) => {
                let source = plan.source.load(base_dir)?;
                disjoint_class_split(&source, plan.first_fraction, plan.seed)
            }
            (None, Some(t), Some(e)) => {
                let pair = SplitPair {
                    tuning: t.load(base_dir)?,
                    evaluation: e.load(base_dir)?,
                };
                if pair.tuning.dim() != pair.evaluation.dim() {
                    return Err(Error::config(format!(
                        "tuning data has {} features, evaluation data {}",
                        pair.tuning.dim(),
                        pair.evaluation.dim()
                    )));
                }
                Ok(pair)
            }
            _ => Err(Error::config(
                "data needs either 'split' or both 'tuning' and 'evaluation'",
            )),
        }
    }
}

/// A preset name, or explicit task sizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_task_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_fraction: Option<f64>,
}

impl ScenarioConfig {
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let mut spec = match (&self.preset, self.first_task_classes, self.increment_classes) {
            (Some(p), None, None) => ScenarioSpec::preset(p)?,
            (None, Some(f), Some(i)) => ScenarioSpec {
                first_task_classes: f,
                increment_classes: i,
                val_fraction: DEFAULT_VAL_FRACTION,
            },
            _ => {
                return Err(Error::config(
                    "scenario needs either 'preset' or both 'first_task_classes' and 'increment_classes'",
                ))
            }
        };
        if let Some(v) = self.val_fraction {
            spec.val_fraction = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in learners to run.
    #[serde(default)]
    pub algorithms: Vec<AlgorithmId>,
    /// External trainers driven over the subprocess bridge.
    #[serde(default)]
    pub external: Vec<ExternalSpec>,
    pub data: DataPlan,
    /// Column label in results tables, e.g. "high/10tasks".
    #[serde(default = "default_condition")]
    pub condition: String,
    pub scenario: ScenarioConfig,
    pub space: IndexMap<String, Vec<HpValue>>,
    /// `R`.
    pub samples: usize,
    /// `S`.
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub jobs: usize,
    #[serde(default)]
    pub learner: LearnerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_condition() -> String {
    "default".to_string()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() && self.external.is_empty() {
            return Err(Error::config("no algorithms configured"));
        }
        for ext in &self.external {
            ext.validate()?;
            if ext.name.parse::<AlgorithmId>().is_ok() {
                return Err(Error::config(format!(
                    "external trainer name '{}' shadows a built-in algorithm",
                    ext.name
                )));
            }
        }
        self.space()?;
        self.protocol_settings()?.validate()?;
        self.learner.validate()
    }

    pub fn space(&self) -> Result<HyperparameterSpace> {
        HyperparameterSpace::new(self.space.iter().map(|(k, v)| (k.clone(), v.clone())))
    }

    pub fn protocol_settings(&self) -> Result<ProtocolSettings> {
        Ok(ProtocolSettings {
            scenario: self.scenario.resolve()?,
            samples: self.samples,
            trials: self.trials,
            base_seed: self.base_seed,
            jobs: self.jobs,
        })
    }

    /// Names of every configured algorithm, built-in first.
    pub fn algorithm_names(&self) -> Vec<String> {
        self.algorithms
            .iter()
            .map(ToString::to_string)
            .chain(self.external.iter().map(|e| e.name.clone()))
            .collect()
    }

    /// Runner for `name`, which must be configured.
    pub fn runner(&self, name: &str) -> Result<Box<dyn TrialRunner>> {
        if let Ok(algo) = name.parse::<AlgorithmId>() {
            if self.algorithms.contains(&algo) {
                return Ok(Box::new(NativeRunner {
                    algorithm: algo,
                    settings: self.learner.clone(),
                }));
            }
        }
        if let Some(ext) = self.external.iter().find(|e| e.name == name) {
            return Ok(Box::new(ExternalRunner::new(ext.clone(), self.learner.init.init_scale)));
        }
        Err(Error::config(format!("algorithm '{name}' is not configured")))
    }
}
