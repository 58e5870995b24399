//! Labeled feature datasets, loaders, and the class-disjoint split that
//! produces the tuning and evaluation datasets.

mod cifar;
mod csv;
mod project;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use self::cifar::{load_cifar_binary, CifarVariant};
pub use self::csv::{load_csv, write_csv};
pub use self::project::random_project;
pub use self::split::{disjoint_class_split, SplitPair};
pub use self::synth::synth_gaussians;

/// An `N x d` feature matrix with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    features: Array2<f64>,
    labels: Vec<u32>,
    class_set: Vec<u32>,
    /// `source_labels[i]` is the label that dense label `i` had before a split.
    source_labels: Option<Vec<u32>>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: Array2<f64>, labels: Vec<u32>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::contract(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        let mut class_set = labels.clone();
        class_set.sort_unstable();
        class_set.dedup();
        Ok(Self {
            name: name.into(),
            features,
            labels,
            class_set,
            source_labels: None,
        })
    }

    pub fn with_source_labels(mut self, source_labels: Vec<u32>) -> Self {
        self.source_labels = Some(source_labels);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_set(&self) -> &[u32] {
        &self.class_set
    }

    pub fn source_labels(&self) -> Option<&[u32]> {
        self.source_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Row indices grouped by class, ascending within each class.
    pub fn indices_by_class(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    /// Gathers the given rows (in that order) into a new dataset.
    pub fn subset(&self, name: impl Into<String>, rows: &[usize]) -> LabeledDataset {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let mut out = LabeledDataset::new(name, features, labels).expect("consistent subset");
        out.source_labels = self.source_labels.clone();
        out
    }

    /// Every class must have at least two examples so that a stratified
    /// train/validation holdout leaves both sides nonempty.
    pub fn ensure_stratifiable(&self) -> Result<()> {
        for (class, rows) in self.indices_by_class() {
            if rows.len() < 2 {
                return Err(Error::contract(format!(
                    "class {class} of '{}' has {} example(s); at least 2 required",
                    self.name,
                    rows.len()
                )));
            }
        }
        Ok(())
    }

    /// Concatenates datasets with equal feature dimension.
    pub fn concat(name: impl Into<String>, parts: &[&LabeledDataset]) -> Result<LabeledDataset> {
        let dim = parts
            .first()
            .map(|p| p.dim())
            .ok_or_else(|| Error::contract("concatenating zero datasets"))?;
        if parts.iter().any(|p| p.dim() != dim) {
            return Err(Error::contract("concatenating datasets of different dimension"));
        }
        let views: Vec<_> = parts.iter().map(|p| p.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::contract(e.to_string()))?;
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        LabeledDataset::new(name, features, labels)
    }

    pub fn metadata(&self) -> DatasetMetadata {
        DatasetMetadata {
            name: self.name.clone(),
            dim: self.dim(),
            num_classes: self.class_set.len(),
            num_examples: self.len(),
            label_remap: self.source_labels.as_ref().map(|src| {
                src.iter()
                    .enumerate()
                    .map(|(dense, &source)| (dense as u32, source))
                    .collect()
            }),
        }
    }
}

/// JSON sidecar written next to exported datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub name: String,
    pub dim: usize,
    pub num_classes: usize,
    pub num_examples: usize,
    /// dense label -> source label
    pub label_remap: Option<BTreeMap<u32, u32>>,
}

impl DatasetMetadata {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn class_set_is_sorted_and_distinct() {
        let ds = LabeledDataset::new("t", array![[0.0], [1.0], [2.0]], vec![4, 1, 4]).unwrap();
        assert_eq!(ds.class_set(), &[1, 4]);
        assert!(ds.ensure_stratifiable().is_err());
    }

    #[test]
    fn rejects_row_label_mismatch() {
        assert!(LabeledDataset::new("t", array![[0.0], [1.0]], vec![0]).is_err());
    }

    #[test]
    fn metadata_round_trip() {
        let ds = LabeledDataset::new("t", array![[0.0, 1.0], [1.0, 2.0]], vec![0, 1])
            .unwrap()
            .with_source_labels(vec![17, 3]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("meta.json");
        ds.metadata().write(&p).unwrap();
        let back = DatasetMetadata::read(&p).unwrap();
        assert_eq!(back, ds.metadata());
        assert_eq!(back.label_remap.unwrap()[&0], 17);
    }
}
