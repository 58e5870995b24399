//! Accuracy metrics and the best-set selection rule.
//!
//! Metrics are kept as fractions in `[0, 1]`; interfaces that print them use
//! percentages with two decimals.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `Acc_t` for `t = 1..=T`: accuracy over the validation data of tasks
/// `1..=t`, measured right after training task `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskAccuracySeries(Vec<f64>);

impl TaskAccuracySeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("accuracy {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }

    pub fn metric_pair(&self) -> Result<MetricPair> {
        let acc = self
            .last()
            .ok_or_else(|| Error::contract("empty accuracy series"))?;
        Ok(MetricPair {
            acc,
            avg_acc: avg_acc(self)?,
        })
    }
}

/// Final accuracy and average incremental accuracy of one run (or a mean
/// over runs).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricPair {
    pub acc: f64,
    pub avg_acc: f64,
}

impl MetricPair {
    pub const ZERO: MetricPair = MetricPair {
        acc: 0.0,
        avg_acc: 0.0,
    };

    pub fn harmonic(&self) -> f64 {
        // both fields are validated non-negative at construction sites
        harmonic_mean(self.acc, self.avg_acc).unwrap_or(0.0)
    }
}

/// Top-1 accuracy.
pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `AvgAcc = (1/T) * sum_t Acc_t`.
pub fn avg_acc(series: &TaskAccuracySeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::contract("average of an empty accuracy series"));
    }
    Ok(series.0.iter().sum::<f64>() / series.len() as f64)
}

/// `2ab / (a + b)`, with `0` when `a + b == 0`. Works on any common scale.
pub fn harmonic_mean(a: f64, b: f64) -> Result<f64> {
    if a < 0.0 || b < 0.0 || a.is_nan() || b.is_nan() {
        return Err(Error::contract(format!(
            "harmonic mean of negative or NaN input ({a}, {b})"
        )));
    }
    let sum = a + b;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * a * b / sum)
}

/// Index of the record with the highest harmonic mean; the lowest index wins
/// ties.
pub fn select_best_index(pairs: &[MetricPair]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in pairs.iter().enumerate() {
        let hm = harmonic_mean(p.acc, p.avg_acc)?;
        match best {
            Some((_, b)) if hm <= b => {}
            _ => best = Some((i, hm)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::contract("select_best_set over no records"))
}

/// Picks the assignment whose metrics maximise the harmonic mean of `Acc`
/// and `AvgAcc`.
pub fn select_best_set<'a, H>(records: &'a [(H, MetricPair)]) -> Result<&'a H> {
    let pairs: Vec<MetricPair> = records.iter().map(|(_, p)| *p).collect();
    let i = select_best_index(&pairs)?;
    Ok(&records[i].0)
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for a
/// single value).
pub fn mean_and_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::contract("mean of no values"));
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    // second pass removes most of the rounding in the naive sum
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(acc: f64, avg_acc: f64) -> MetricPair {
        MetricPair { acc, avg_acc }
    }

    #[test]
    fn sample_sd() {
        assert_eq!(mean_and_sd(&[0.4]).unwrap(), (0.4, 0.0));
        // mean 0.5, deviations -0.1/0/0.1, ss 0.02, /2 = 0.01
        let (m, sd) = mean_and_sd(&[0.4, 0.5, 0.6]).unwrap();
        assert!((m - 0.5).abs() < 1e-15 && (sd - 0.1).abs() < 1e-12);
        assert!(mean_and_sd(&[]).is_err());
        assert_eq!(mean_and_sd(&[0.95; 3]).unwrap(), (0.95, 0.0));
        assert_eq!(mean_and_sd(&[0.1; 7]).unwrap(), (0.1, 0.0));
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 1], &[1, 2, 3]).unwrap(), 1.0 / 3.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[0], &[1, 1]).is_err());
        assert!(accuracy::<u32>(&[], &[]).is_err());
    }

    #[test]
    fn avg_acc_cases() {
        let s = TaskAccuracySeries::new(vec![0.8, 0.6, 0.4]).unwrap();
        assert!((avg_acc(&s).unwrap() - 0.6).abs() < 1e-15);
        let s = TaskAccuracySeries::new(vec![0.37; 9]).unwrap();
        assert!((avg_acc(&s).unwrap() - 0.37).abs() < 1e-15);
        let s = TaskAccuracySeries::new(vec![1.0, 0.5]).unwrap();
        assert_eq!(avg_acc(&s).unwrap(), 0.75);
        assert!(avg_acc(&TaskAccuracySeries::new(vec![]).unwrap()).is_err());
        assert!(TaskAccuracySeries::new(vec![1.2]).is_err());
    }

    #[test]
    fn harmonic_cases() {
        assert_eq!(harmonic_mean(0.3, 0.3).unwrap(), 0.3);
        assert_eq!(harmonic_mean(0.0, 55.0).unwrap(), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0).unwrap(), 0.0);
        // Replay, high similarity, 10 tasks: 47.01 / 67.14
        let hm = harmonic_mean(47.01, 67.14).unwrap();
        assert!((hm - 55.30).abs() < 0.005, "{hm}");
        assert!(harmonic_mean(-1.0, 2.0).is_err());
    }

    #[test]
    fn select_best_cases() {
        let recs = vec![("H1", pair(50.0, 70.0)), ("H2", pair(60.0, 60.0))];
        assert_eq!(*select_best_set(&recs).unwrap(), "H2");
        let recs = vec![("H1", pair(0.4, 0.4))];
        assert_eq!(*select_best_set(&recs).unwrap(), "H1");
        let recs = vec![("H1", pair(60.0, 60.0)), ("H2", pair(60.0, 60.0))];
        assert_eq!(*select_best_set(&recs).unwrap(), "H1");
        let empty: Vec<(&str, MetricPair)> = vec![];
        assert!(select_best_set(&empty).is_err());
    }

    proptest! {
        #[test]
        fn harmonic_below_geometric_below_arithmetic(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let h = harmonic_mean(a, b).unwrap();
            let g = (a * b).sqrt();
            let m = (a + b) / 2.0;
            prop_assert!(h <= g * (1.0 + 1e-12) + 1e-300);
            prop_assert!(g <= m * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn selection_is_permutation_stable_without_ties(
            vals in proptest::collection::vec((0u32..10_000, 0u32..10_000), 1..20),
            rot in 0usize..20,
        ) {
            let pairs: Vec<(usize, MetricPair)> = vals
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| (i, pair(a as f64 / 1e4, b as f64 / 1e4)))
                .collect();
            let hms: Vec<f64> = pairs.iter().map(|(_, p)| p.harmonic()).collect();
            let max = hms.iter().cloned().fold(f64::MIN, f64::max);
            let n_max = hms.iter().filter(|&&h| h == max).count();
            let best = *select_best_set(&pairs).unwrap();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let best_rot = *select_best_set(&rotated).unwrap();
            if n_max == 1 {
                prop_assert_eq!(best, best_rot);
            } else {
                let first = rotated.iter().find(|(_, p)| p.harmonic() == max).unwrap().0;
                prop_assert_eq!(best_rot, first);
            }
        }
    }
}
