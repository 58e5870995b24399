//! Bias correction: an affine map `alpha * z + beta` on the logits of the
//! newest task's classes, fitted on a held-out split.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::nn::log_softmax;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BiasParams {
    pub const IDENTITY: BiasParams = BiasParams { alpha: 1.0, beta: 0.0 };
}

/// Applies the newest task's correction. `task_of_class[k]` is the task that
/// introduced output `k`; `params[t]` is the correction fitted for task `t`.
pub fn bic_correct(logits: ArrayView2<'_, f64>, task_of_class: &[usize], params: &[BiasParams]) -> Result<Array2<f64>> {
    if task_of_class.len() != logits.ncols() {
        return Err(Error::contract("task-of-class map does not cover the logits"));
    }
    let mut out = logits.to_owned();
    let Some(&newest) = task_of_class.iter().max() else {
        return Ok(out);
    };
    if newest == 0 {
        return Ok(out);
    }
    let p = params
        .get(newest)
        .ok_or_else(|| Error::contract(format!("no bias parameters fitted for task {newest}")))?;
    for (k, &t) in task_of_class.iter().enumerate() {
        if t == newest {
            out.column_mut(k).mapv_inplace(|z| p.alpha * z + p.beta);
        }
    }
    Ok(out)
}

/// Fits `(alpha, beta)` for the columns in `new_cols` by full-batch gradient
/// descent on the cross-entropy of the corrected logits, starting from the
/// identity.
pub fn fit_bias(logits: ArrayView2<'_, f64>, targets: &[usize], new_cols: &[usize], iterations: usize, lr: f64) -> Result<BiasParams> {
    if logits.nrows() != targets.len() || targets.is_empty() {
        return Err(Error::contract("bias fitting needs aligned, nonempty logits and targets"));
    }
    let n = targets.len() as f64;
    let mut p = BiasParams::IDENTITY;
    for _ in 0..iterations {
        let mut z = logits.to_owned();
        for &k in new_cols {
            z.column_mut(k).mapv_inplace(|v| p.alpha * v + p.beta);
        }
        let mut prob = log_softmax(z.view()).mapv(f64::exp);
        for (i, &y) in targets.iter().enumerate() {
            prob[[i, y]] -= 1.0;
        }
        let (mut ga, mut gb) = (0.0, 0.0);
        for &k in new_cols {
            for i in 0..targets.len() {
                ga += prob[[i, k]] * logits[[i, k]];
                gb += prob[[i, k]];
            }
        }
        p.alpha -= lr * ga / n;
        p.beta -= lr * gb / n;
        if !(p.alpha.is_finite() && p.beta.is_finite()) {
            return Err(Error::Diverged("bias correction parameters became non-finite".into()));
        }
    }
    Ok(p)
}

/// Stratified per-class carve-out of `round(ratio * n_c)` rows (at least one)
/// for bias fitting. Returns `(train_rows, heldout_rows)`.
pub fn stratified_holdout(data: &LabeledDataset, ratio: f64, rng_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (class, mut rows) in data.indices_by_class() {
        let n = rows.len();
        let k = ((ratio * n as f64).round() as usize).max(1);
        if k >= n {
            return Err(Error::config(format!(
                "split ratio {ratio} leaves no training rows for class {class} ({n} available)"
            )));
        }
        rows.shuffle(&mut seed::derived_rng(rng_seed, "bic-holdout", &[u64::from(class)]));
        held.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    Ok((train, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::distr::weighted::WeightedIndex;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_correction() {
        let z = array![[1.0, 2.0, 3.0]];
        let out = bic_correct(z.view(), &[0, 1, 1], &[BiasParams::IDENTITY, BiasParams::IDENTITY]).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn affine_arithmetic() {
        let z = array![[4.0, 4.0]];
        let p = [BiasParams::IDENTITY, BiasParams { alpha: 0.5, beta: -1.0 }];
        let out = bic_correct(z.view(), &[0, 1], &p).unwrap();
        assert_eq!(out, array![[4.0, 1.0]]);
        assert!(bic_correct(z.view(), &[0, 2], &p).is_err());
    }

    #[test]
    fn recovers_inflated_bias() {
        // labels drawn from softmax(true logits); new-class logits then shifted by +2
        let mut rng = seed::rng(11);
        let (n, c) = (4000, 6);
        let new_cols = [4usize, 5];
        let mut logits = Array2::<f64>::zeros((n, c));
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            for k in 0..c {
                logits[[i, k]] = 1.5 * rng.sample::<f64, _>(StandardNormal);
            }
            let w: Vec<f64> = logits.row(i).iter().map(|v| v.exp()).collect();
            targets.push(WeightedIndex::new(&w).unwrap().sample(&mut rng));
            for &k in &new_cols {
                logits[[i, k]] += 2.0;
            }
        }
        let p = fit_bias(logits.view(), &targets, &new_cols, 2000, 0.5).unwrap();
        assert!((p.beta + 2.0).abs() < 0.2, "{p:?}");
        assert!((p.alpha - 1.0).abs() < 0.1, "{p:?}");
    }

    #[test]
    fn holdout_is_stratified() {
        let data = crate::data::synth_gaussians(3, 2, 20, 1.0, 0).unwrap();
        let (train, held) = stratified_holdout(&data, 0.1, 4).unwrap();
        assert_eq!(held.len(), 6);
        assert_eq!(train.len(), 54);
        let tiny = data.subset("tiny", &[0, 20, 21]);
        assert!(stratified_holdout(&tiny, 0.1, 0).unwrap_err().is_config());
    }
}
