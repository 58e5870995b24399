//! Two-phase evaluation harness for class-incremental learning.
//!
//! A hyperparameter tuning phase runs `R` randomly sampled hyperparameter
//! assignments `S` times each on one dataset; the assignment with the best
//! harmonic mean of final accuracy and average incremental accuracy is then
//! re-run `S` times, unchanged, on a class-disjoint dataset under the same
//! scenario. The evaluation-phase score is the algorithm's result.
//!
//! The crate bundles everything needed to run that loop at desk scale:
//! dataset loaders and splitting ([`data`]), scenario construction and the
//! exemplar memory ([`scenario`]), a small MLP trainer ([`nn`]), a roster of
//! continual learners ([`learners`]), the protocol engine ([`protocol`]),
//! persistence and reporting ([`records`], [`report`], [`config`]) and a
//! subprocess bridge for external trainers ([`bridge`]).

pub mod bridge;
pub mod config;
pub mod data;
mod error;
pub mod learners;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod records;
pub mod report;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};

pub use data::{LabeledDataset, SplitPair};
pub use learners::{AlgorithmId, LearnerHyperparams, LearnerState, Status};
pub use metrics::{MetricPair, TaskAccuracySeries};
pub use protocol::{HpValue, HyperparameterAssignment, HyperparameterSpace, PhaseReport};
pub use records::{Phase, RunRecord};
pub use scenario::{ExemplarMemory, ScenarioSpec, TaskSequence};
