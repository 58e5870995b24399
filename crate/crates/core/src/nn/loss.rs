//! Cross-entropy, temperature-scaled distillation, and weight decay.
//!
//! For a batch of `N` rows the loss is
//!
//! ```text
//! L = mean_i CE(z_i, y_i)
//!   + lambda * T^2 * mean_i KL(softmax(t_i / T) || softmax(z_i[..k] / T))
//!   + (weight_decay / 2) * ||W||^2
//! ```
//!
//! where `t` are teacher logits over the first `k` outputs and `W` ranges
//! over weight matrices (biases are not decayed).

use ndarray::{Array2, ArrayView2};

use super::{Mlp, MlpGrads};
use crate::{Error, Result};

/// Distillation reference: teacher logits for the first `k` output columns.
#[derive(Debug, Clone, Copy)]
pub struct KdTarget<'a> {
    pub teacher_logits: ArrayView2<'a, f64>,
    pub temperature: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weight_decay: f64,
}

/// Row-wise log-softmax with max-subtraction.
pub fn log_softmax(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax(z: ArrayView2<'_, f64>) -> Array2<f64> {
    log_softmax(z).mapv(f64::exp)
}

/// Loss of a logit matrix and its gradient w.r.t. the logits.
pub fn logit_loss(logits: ArrayView2<'_, f64>, targets: &[usize], kd: Option<&KdTarget<'_>>) -> Result<(f64, Array2<f64>)> {
    let n = logits.nrows();
    let c = logits.ncols();
    if targets.len() != n || n == 0 {
        return Err(Error::contract(format!("{} targets for {n} logit rows", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::contract(format!("target {t} outside {c} outputs")));
    }
    let inv_n = 1.0 / n as f64;

    let logp = log_softmax(logits);
    let mut loss = -targets
        .iter()
        .enumerate()
        .map(|(i, &y)| logp[[i, y]])
        .sum::<f64>()
        * inv_n;
    let mut grad = logp.mapv(f64::exp);
    for (i, &y) in targets.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad.mapv_inplace(|g| g * inv_n);

    if let Some(kd) = kd.filter(|kd| kd.lambda != 0.0) {
        let k = kd.teacher_logits.ncols();
        if kd.teacher_logits.nrows() != n || k > c || k == 0 {
            return Err(Error::contract("teacher logits do not match the student batch"));
        }
        if !(kd.temperature > 0.0) {
            return Err(Error::contract(format!("KD temperature must be > 0, got {}", kd.temperature)));
        }
        let t = kd.temperature;
        let student = logits.slice(ndarray::s![.., ..k]).mapv(|v| v / t);
        let teacher = kd.teacher_logits.mapv(|v| v / t);
        let log_p = log_softmax(student.view());
        let log_q = log_softmax(teacher.view());
        let q = log_q.mapv(f64::exp);
        let kl: f64 = ndarray::Zip::from(&q)
            .and(&log_q)
            .and(&log_p)
            .fold(0.0, |acc, &qv, &lq, &lp| if qv > 0.0 { acc + qv * (lq - lp) } else { acc });
        loss += kd.lambda * t * t * kl * inv_n;
        // d/dz [lambda T^2 KL] = lambda T (p - q)
        let scale = kd.lambda * t * inv_n;
        let p = log_p.mapv(f64::exp);
        let mut g = grad.slice_mut(ndarray::s![.., ..k]);
        ndarray::Zip::from(&mut g)
            .and(&p)
            .and(&q)
            .for_each(|g, &pv, &qv| *g += scale * (pv - qv));
    }

    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite loss {loss}")));
    }
    Ok((loss, grad))
}

/// Loss and exact gradients of an [`Mlp`] on one batch.
pub fn loss_and_grad(
    params: &Mlp,
    batch: ArrayView2<'_, f64>,
    labels: &[usize],
    kd: Option<&KdTarget<'_>>,
    config: &LossConfig,
) -> Result<(f64, MlpGrads)> {
    params.check_input(batch)?;
    let cache = params.backbone.forward_cached(batch);
    let features = cache.output();
    let logits = params.head.forward(features.view());
    let (mut loss, d_logits) = logit_loss(logits.view(), labels, kd)?;

    let (mut head, d_features) = params.head.backward(features.view(), &d_logits);
    let (mut backbone, _) = params.backbone.backward(&cache, d_features);

    let wd = config.weight_decay;
    if wd != 0.0 {
        loss += 0.5 * wd * params.weight_sq_norm();
        head.add_weight_decay(&params.head, wd);
        for (g, l) in backbone.iter_mut().zip(&params.backbone.layers) {
            g.add_weight_decay(l, wd);
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
    }
    Ok((loss, MlpGrads { backbone, head }))
}
