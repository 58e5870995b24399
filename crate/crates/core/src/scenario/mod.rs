//! Scenario construction: class orderings, task partitioning with per-task
//! stratified train/validation holdout, and the class-balanced exemplar
//! memory.

mod memory;

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::{seed, Error, Result};

pub use self::memory::{rebuild_exemplar_memory, ExemplarMemory};

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

/// Parameters of the scenario-generating function: how many classes the
/// first task gets, how many each later task gets, and the per-class
/// validation holdout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub first_task_classes: usize,
    pub increment_classes: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn default_val_fraction() -> f64 {
    DEFAULT_VAL_FRACTION
}

impl ScenarioSpec {
    pub fn new(first_task_classes: usize, increment_classes: usize, val_fraction: f64) -> Result<Self> {
        let spec = Self {
            first_task_classes,
            increment_classes,
            val_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// "10tasks": 10 tasks of 5 classes. "6tasks": 25 classes, then 5 tasks of 5.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "10tasks" => Self::new(5, 5, DEFAULT_VAL_FRACTION),
            "6tasks" => Self::new(25, 5, DEFAULT_VAL_FRACTION),
            other => Err(Error::config(format!("unknown scenario preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.increment_classes < 1 || self.first_task_classes < self.increment_classes {
            return Err(Error::config(format!(
                "scenario needs first_task_classes >= increment_classes >= 1 (got {}, {})",
                self.first_task_classes, self.increment_classes
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(Error::config(format!(
                "val_fraction must be in (0, 0.5), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }

    /// Task sizes for `num_classes` classes.
    pub fn task_sizes(&self, num_classes: usize) -> Result<Vec<usize>> {
        self.validate()?;
        if num_classes < self.first_task_classes {
            return Err(Error::config(format!(
                "{num_classes} classes cannot fill a first task of {}",
                self.first_task_classes
            )));
        }
        let rest = num_classes - self.first_task_classes;
        let residue = rest % self.increment_classes;
        if residue != 0 {
            return Err(Error::config(format!(
                "{rest} classes after the first task leave residue {residue} mod {}",
                self.increment_classes
            )));
        }
        let mut sizes = vec![self.first_task_classes];
        sizes.extend(std::iter::repeat_n(self.increment_classes, rest / self.increment_classes));
        Ok(sizes)
    }
}

/// One task of a scenario.
#[derive(Debug, Clone)]
pub struct Task {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub class_ids: Vec<u32>,
}

/// Ordered class-disjoint tasks and the class ordering that produced them.
#[derive(Debug, Clone)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
    pub ordering: Vec<u32>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.class_ids.len()).collect()
    }
}

/// Seeded Fisher-Yates permutation of `class_ids`.
pub fn shuffle_ordering(class_ids: &[u32], seed: u64) -> Result<Vec<u32>> {
    if class_ids.is_empty() {
        return Err(Error::contract("cannot shuffle an empty class list"));
    }
    let mut out = class_ids.to_vec();
    out.shuffle(&mut seed::rng(seed));
    Ok(out)
}

/// Builds the task sequence. Task 1 takes the first `first_task_classes`
/// classes of `ordering`, each later task the next `increment_classes`; each
/// class's examples are split into train/val by a seeded holdout of
/// `round(val_fraction * n)` examples, clamped to `1..=n-1`.
pub fn make_scenario(
    data: &LabeledDataset,
    spec: &ScenarioSpec,
    ordering: &[u32],
    seed: u64,
) -> Result<TaskSequence> {
    let sorted: Vec<u32> = {
        let mut v = ordering.to_vec();
        v.sort_unstable();
        v
    };
    if sorted != data.class_set() {
        return Err(Error::contract(
            "ordering is not a permutation of the dataset's class set",
        ));
    }
    let sizes = spec.task_sizes(ordering.len())?;
    data.ensure_stratifiable()?;
    let by_class = data.indices_by_class();

    let mut split: HashMap<u32, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (&class, rows) in &by_class {
        let mut rows = rows.clone();
        rows.shuffle(&mut seed::derived_rng(seed, "holdout", &[u64::from(class)]));
        let n = rows.len();
        let n_val = ((spec.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let train = rows.split_off(n_val);
        split.insert(class, (train, rows));
    }

    let mut tasks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (t, size) in sizes.into_iter().enumerate() {
        let class_ids = ordering[start..start + size].to_vec();
        start += size;
        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for c in &class_ids {
            let (tr, va) = &split[c];
            train_rows.extend_from_slice(tr);
            val_rows.extend_from_slice(va);
        }
        tasks.push(Task {
            train: data.subset(format!("{}-task{}-train", data.name(), t + 1), &train_rows),
            val: data.subset(format!("{}-task{}-val", data.name(), t + 1), &val_rows),
            class_ids,
        });
    }
    Ok(TaskSequence {
        tasks,
        ordering: ordering.to_vec(),
    })
}

/// Checks every structural invariant of a task sequence against its source.
pub fn check_sequence(seq: &TaskSequence, source: &LabeledDataset) -> Result<()> {
    let concat: Vec<u32> = seq.tasks.iter().flat_map(|t| t.class_ids.clone()).collect();
    if concat != seq.ordering {
        return Err(Error::contract("task classes do not concatenate to the ordering"));
    }
    let mut seen = BTreeSet::new();
    for c in &concat {
        if !seen.insert(*c) {
            return Err(Error::contract(format!("class {c} appears in two tasks")));
        }
    }
    let mut total = 0;
    for (t, task) in seq.tasks.iter().enumerate() {
        let classes: BTreeSet<u32> = task.class_ids.iter().copied().collect();
        for part in [&task.train, &task.val] {
            if part.labels().iter().any(|l| !classes.contains(l)) {
                return Err(Error::contract(format!("task {} holds a foreign class", t + 1)));
            }
            if part.class_set().len() != classes.len() {
                return Err(Error::contract(format!(
                    "task {} has a class with an empty train or val side",
                    t + 1
                )));
            }
        }
        total += task.train.len() + task.val.len();
    }
    if total != source.len() {
        return Err(Error::contract(format!(
            "{total} examples across tasks, source has {}",
            source.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussians;

    #[test]
    fn presets() {
        assert_eq!(ScenarioSpec::preset("10tasks").unwrap().task_sizes(50).unwrap(), vec![5; 10]);
        assert_eq!(
            ScenarioSpec::preset("6tasks").unwrap().task_sizes(50).unwrap(),
            vec![25, 5, 5, 5, 5, 5]
        );
        assert!(ScenarioSpec::preset("3tasks").is_err());
    }

    #[test]
    fn residue_error() {
        let spec = ScenarioSpec::new(25, 4, 0.2).unwrap();
        let err = spec.task_sizes(50).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("residue 1"), "{err}");
    }

    #[test]
    fn spec_validation() {
        assert!(ScenarioSpec::new(2, 3, 0.2).is_err());
        assert!(ScenarioSpec::new(2, 0, 0.2).is_err());
        assert!(ScenarioSpec::new(2, 2, 0.5).is_err());
        assert!(ScenarioSpec::new(2, 2, 0.0).is_err());
    }

    #[test]
    fn shuffle_cases() {
        assert_eq!(shuffle_ordering(&[4], 3).unwrap(), vec![4]);
        assert!(shuffle_ordering(&[], 3).is_err());
        let ids: Vec<u32> = (0..50).collect();
        let a = shuffle_ordering(&ids, 0).unwrap();
        let b = shuffle_ordering(&ids, 1).unwrap();
        assert_ne!(a, b);
        for o in [&a, &b] {
            let mut s = o.clone();
            s.sort_unstable();
            assert_eq!(s, ids);
        }
        assert_eq!(a, shuffle_ordering(&ids, 0).unwrap());
    }

    #[test]
    fn fifty_classes_ten_tasks() {
        let data = synth_gaussians(50, 2, 10, 1.0, 0).unwrap();
        let ordering = shuffle_ordering(data.class_set(), 4).unwrap();
        let spec = ScenarioSpec::preset("10tasks").unwrap();
        let seq = make_scenario(&data, &spec, &ordering, 1).unwrap();
        assert_eq!(seq.sizes(), vec![5; 10]);
        check_sequence(&seq, &data).unwrap();
        // 10 per class, 20% holdout
        assert_eq!(seq.tasks[0].val.len(), 5 * 2);
        assert_eq!(seq.tasks[0].train.len(), 5 * 8);
    }

    #[test]
    fn rejects_non_permutation() {
        let data = synth_gaussians(4, 2, 4, 1.0, 0).unwrap();
        let spec = ScenarioSpec::new(2, 2, 0.2).unwrap();
        assert!(make_scenario(&data, &spec, &[0, 1, 2, 2], 0).is_err());
        assert!(make_scenario(&data, &spec, &[0, 1, 2], 0).is_err());
    }
}
