use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::index::sample;

use crate::data::LabeledDataset;
use crate::{seed, Error, Result};

/// Bounded, class-balanced replay buffer.
#[derive(Debug, Clone)]
pub struct ExemplarMemory {
    capacity: usize,
    store: Option<LabeledDataset>,
    /// In encounter order.
    seen_classes: Vec<u32>,
}

impl ExemplarMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            store: None,
            seen_classes: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn store(&self) -> Option<&LabeledDataset> {
        self.store.as_ref()
    }

    pub fn len(&self) -> usize {
        self.store.as_ref().map_or(0, LabeledDataset::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seen_classes(&self) -> &[u32] {
        &self.seen_classes
    }

    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts: BTreeMap<u32, usize> = self.seen_classes.iter().map(|&c| (c, 0)).collect();
        if let Some(s) = &self.store {
            for l in s.labels() {
                *counts.entry(*l).or_default() += 1;
            }
        }
        counts
    }

    /// Per-class quota: `capacity / |seen|`, with the remainder handed out one
    /// each to the earliest-encountered classes.
    pub fn quotas(&self) -> Vec<(u32, usize)> {
        let n = self.seen_classes.len();
        if n == 0 {
            return Vec::new();
        }
        let base = self.capacity / n;
        let extra = self.capacity % n;
        self.seen_classes
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, base + usize::from(i < extra)))
            .collect()
    }
}

/// Rebuilds the memory from scratch out of the previous store and the new
/// task's training data. Each seen class draws its quota uniformly without
/// replacement from its available examples; classes with fewer examples
/// keep all of them.
pub fn rebuild_exemplar_memory(
    memory: &ExemplarMemory,
    new_task_train: &LabeledDataset,
    rng_seed: u64,
) -> Result<ExemplarMemory> {
    let new_classes = new_task_train.class_set();
    if let Some(c) = new_classes.iter().find(|c| memory.seen_classes.contains(c)) {
        return Err(Error::contract(format!(
            "class {c} was already seen by the exemplar memory"
        )));
    }
    if let Some(store) = &memory.store {
        if store.dim() != new_task_train.dim() {
            return Err(Error::contract("exemplar dimension mismatch"));
        }
    }

    let mut next = ExemplarMemory {
        capacity: memory.capacity,
        store: None,
        seen_classes: memory.seen_classes.clone(),
    };
    // encounter order within a task follows first appearance in its data
    let mut fresh: Vec<u32> = Vec::new();
    for &l in new_task_train.labels() {
        if !fresh.contains(&l) {
            fresh.push(l);
        }
    }
    next.seen_classes.extend(fresh);

    let pool = match &memory.store {
        Some(s) => LabeledDataset::concat("memory-pool", &[s, new_task_train])?,
        None => new_task_train.clone(),
    };
    let by_class = pool.indices_by_class();

    let mut rows = Vec::new();
    for (class, quota) in next.quotas() {
        let avail = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        if avail.len() <= quota {
            rows.extend_from_slice(avail);
        } else {
            let mut rng = seed::derived_rng(rng_seed, "exemplars", &[u64::from(class)]);
            rows.extend(sample(&mut rng, avail.len(), quota).into_iter().map(|k| avail[k]));
        }
    }
    next.store = if rows.is_empty() {
        None
    } else {
        let features: Array2<f64> = pool.features().select(Axis(0), &rows);
        let labels = rows.iter().map(|&i| pool.labels()[i]).collect();
        Some(LabeledDataset::new("exemplars", features, labels)?)
    };
    Ok(next)
}
