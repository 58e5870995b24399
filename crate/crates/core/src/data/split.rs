use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::{seed, Error, Result};

/// Tuning dataset and evaluation dataset with disjoint class sets.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub tuning: LabeledDataset,
    pub evaluation: LabeledDataset,
}

/// Shuffles the source classes with `seed`, gives the first
/// `floor(first_fraction * C)` (clamped to `1..=C-1`) to the tuning side and
/// the rest to the evaluation side. Labels are re-indexed densely from 0 on
/// each side in shuffled order; the source label of each dense label is kept
/// in [`LabeledDataset::source_labels`].
pub fn disjoint_class_split(
    source: &LabeledDataset,
    first_fraction: f64,
    seed: u64,
) -> Result<SplitPair> {
    let classes = source.class_set();
    if classes.len() < 2 {
        return Err(Error::contract(format!(
            "cannot split '{}': it has {} class(es)",
            source.name(),
            classes.len()
        )));
    }
    if !(first_fraction > 0.0 && first_fraction < 1.0) {
        return Err(Error::contract(format!(
            "first_fraction must be in (0, 1), got {first_fraction}"
        )));
    }
    let mut order = classes.to_vec();
    order.shuffle(&mut seed::derived_rng(seed, "class-split", &[]));
    let n_first = ((first_fraction * classes.len() as f64).floor() as usize).clamp(1, classes.len() - 1);
    let (first, second) = order.split_at(n_first);

    let side = |name: String, side_classes: &[u32]| -> Result<LabeledDataset> {
        let dense: HashMap<u32, u32> = side_classes
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect();
        let rows: Vec<usize> = (0..source.len())
            .filter(|&i| dense.contains_key(&source.labels()[i]))
            .collect();
        let features = source.features().select(ndarray::Axis(0), &rows);
        let labels = rows.iter().map(|&i| dense[&source.labels()[i]]).collect();
        let original: Vec<u32> = match source.source_labels() {
            Some(map) => side_classes.iter().map(|&c| map[c as usize]).collect(),
            None => side_classes.to_vec(),
        };
        Ok(LabeledDataset::new(name, features, labels)?.with_source_labels(original))
    };

    Ok(SplitPair {
        tuning: side(format!("{}-1", source.name()), first)?,
        evaluation: side(format!("{}-2", source.name()), second)?,
    })
}
