use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::{loss_and_grad, KdTarget, LossConfig, Mlp, MlpGrads};
use crate::{seed, Error, Result};

/// Distillation targets precomputed for every row of a training set.
#[derive(Debug, Clone)]
pub struct KdSource {
    pub teacher_logits: Array2<f64>,
    pub temperature: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub batches: usize,
}

/// `params <- params - lr * grads`.
pub fn sgd_step(params: &mut Mlp, grads: &MlpGrads, lr: f64) {
    for (l, g) in params.backbone.layers.iter_mut().zip(&grads.backbone) {
        l.weight.scaled_add(-lr, &g.weight);
        l.bias.scaled_add(-lr, &g.bias);
    }
    params.head.weight.scaled_add(-lr, &grads.head.weight);
    params.head.bias.scaled_add(-lr, &grads.head.bias);
}

/// Seeded shuffle into batches of `batch_size` (the last may be smaller).
pub fn shuffled_batches(n: usize, batch_size: usize, rng_seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(rng_seed));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One SGD pass over explicitly given batches of row indices.
pub fn train_batches(
    params: &mut Mlp,
    data: ArrayView2<'_, f64>,
    targets: &[usize],
    batches: &[Vec<usize>],
    lr: f64,
    config: &LossConfig,
    kd: Option<&KdSource>,
) -> Result<EpochStats> {
    let mut total = 0.0;
    for rows in batches {
        let x = data.select(Axis(0), rows);
        let y: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
        let teacher = kd.map(|k| k.teacher_logits.select(Axis(0), rows));
        let kd_target = match (kd, &teacher) {
            (Some(k), Some(t)) => Some(KdTarget {
                teacher_logits: t.view(),
                temperature: k.temperature,
                lambda: k.lambda,
            }),
            _ => None,
        };
        let (loss, grads) = loss_and_grad(params, x.view(), &y, kd_target.as_ref(), config)?;
        if lr != 0.0 {
            sgd_step(params, &grads, lr);
        }
        total += loss;
    }
    let stats = EpochStats {
        mean_loss: total / batches.len().max(1) as f64,
        batches: batches.len(),
    };
    if !params.all_finite() {
        return Err(Error::Diverged("non-finite parameters after SGD step".into()));
    }
    Ok(stats)
}

/// One epoch of minibatch SGD with a seeded shuffle.
pub fn sgd_epoch(
    params: &mut Mlp,
    data: ArrayView2<'_, f64>,
    targets: &[usize],
    lr: f64,
    batch_size: usize,
    rng_seed: u64,
    config: &LossConfig,
    kd: Option<&KdSource>,
) -> Result<EpochStats> {
    if batch_size == 0 {
        return Err(Error::contract("batch_size must be >= 1"));
    }
    if data.nrows() != targets.len() || targets.is_empty() {
        return Err(Error::contract("training data and targets must be nonempty and aligned"));
    }
    let batches = shuffled_batches(targets.len(), batch_size, rng_seed);
    train_batches(params, data, targets, &batches, lr, config, kd)
}
