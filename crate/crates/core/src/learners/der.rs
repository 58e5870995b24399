//! Dynamically expanded network: one frozen feature-extractor column per past
//! task, a trainable column for the current task, and a unified linear head
//! over the concatenated column features. While a task after the first is
//! trained, an auxiliary head on the new column separates the new classes
//! from an "old" bucket.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::nn::{logit_loss, Backbone, Linear, LinearGrad};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DerNet {
    pub columns: Vec<Backbone>,
    pub head: Linear,
    pub aux: Option<Linear>,
    input_dim: usize,
    hidden: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DerGrads {
    pub column: Vec<LinearGrad>,
    pub head: LinearGrad,
    pub aux: Option<LinearGrad>,
}

impl DerNet {
    pub fn new(input_dim: usize, hidden: &[usize]) -> Self {
        Self {
            columns: Vec::new(),
            head: Linear::zeros(0, 0),
            aux: None,
            input_dim,
            hidden: hidden.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Width of one column's output.
    pub fn column_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    /// Parameters in one column.
    pub fn backbone_params(&self) -> usize {
        let mut prev = self.input_dim;
        let mut total = 0;
        for &h in &self.hidden {
            total += prev * h + h;
            prev = h;
        }
        total
    }

    pub fn num_outputs(&self) -> usize {
        self.head.output_dim()
    }

    /// Live parameters: every column plus the unified head (the auxiliary
    /// head only exists during training).
    pub fn param_count(&self) -> usize {
        self.columns.iter().map(Backbone::param_count).sum::<usize>()
            + self.head.param_count()
            + self.aux.as_ref().map_or(0, Linear::param_count)
    }

    /// Appends a fresh column, freezes the earlier ones, and rebuilds the
    /// head over `columns * width` features for `old + new` classes. Old
    /// head weights are copied into the top-left block.
    pub fn expand<R: Rng + ?Sized>(&mut self, new_classes: usize, rng: &mut R) {
        let width = self.column_width();
        let old_classes = self.num_outputs();
        let old_in = self.head.input_dim();
        self.columns.push(Backbone::new(self.input_dim, &self.hidden, rng));
        let mut head = Linear::glorot(self.columns.len() * width, old_classes + new_classes, rng);
        if old_classes > 0 {
            head.weight
                .slice_mut(s![..old_classes, ..old_in])
                .assign(&self.head.weight);
            head.bias.slice_mut(s![..old_classes]).assign(&self.head.bias);
        }
        self.head = head;
        self.aux = if self.columns.len() > 1 {
            Some(Linear::glorot(width, new_classes + 1, rng))
        } else {
            None
        };
    }

    pub fn drop_aux(&mut self) {
        self.aux = None;
    }

    /// Features of all frozen columns (every column except the last).
    pub fn frozen_features(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let n = self.columns.len().saturating_sub(1);
        let parts: Vec<Array2<f64>> = self.columns[..n].iter().map(|c| c.forward(x)).collect();
        concat_cols(x.nrows(), &parts)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::contract(format!(
                "batch has {} columns, model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        let parts: Vec<Array2<f64>> = self.columns.iter().map(|c| c.forward(x)).collect();
        let feats = concat_cols(x.nrows(), &parts);
        Ok(self.head.forward(feats.view()))
    }

    /// Loss and gradients of the trainable parts (newest column, head, aux)
    /// on one batch. `frozen` holds precomputed features of the frozen
    /// columns for these rows. `old_classes` outputs precede the new ones.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        frozen: ArrayView2<'_, f64>,
        targets: &[usize],
        old_classes: usize,
        aux_lambda: f64,
        weight_decay: f64,
    ) -> Result<(f64, DerGrads)> {
        let column = self.columns.last().ok_or_else(|| Error::contract("no column to train"))?;
        let cache = column.forward_cached(x);
        let new_feats = cache.output();
        let feats = ndarray::concatenate(Axis(1), &[frozen, new_feats.view()])
            .map_err(|e| Error::contract(e.to_string()))?;
        let logits = self.head.forward(feats.view());
        let (mut loss, d_logits) = logit_loss(logits.view(), targets, None)?;
        let (mut head_g, d_feats) = self.head.backward(feats.view(), &d_logits);
        let width = new_feats.ncols();
        let mut d_new = d_feats.slice(s![.., d_feats.ncols() - width..]).to_owned();

        let mut aux_g = None;
        if let Some(aux) = &self.aux {
            if aux_lambda != 0.0 {
                let aux_targets: Vec<usize> = targets
                    .iter()
                    .map(|&t| if t < old_classes { 0 } else { 1 + t - old_classes })
                    .collect();
                let aux_logits = aux.forward(new_feats.view());
                let (aux_loss, mut d_aux) = logit_loss(aux_logits.view(), &aux_targets, None)?;
                d_aux.mapv_inplace(|g| g * aux_lambda);
                loss += aux_lambda * aux_loss;
                let (g, d_in) = aux.backward(new_feats.view(), &d_aux);
                d_new += &d_in;
                aux_g = Some(g);
            } else {
                aux_g = Some(LinearGrad::zeros_like(aux));
            }
        }
        let (mut col_g, _) = column.backward(&cache, d_new);

        if weight_decay != 0.0 {
            loss += 0.5
                * weight_decay
                * (column.weight_sq_norm()
                    + self.head.weight_sq_norm()
                    + self.aux.as_ref().map_or(0.0, Linear::weight_sq_norm));
            head_g.add_weight_decay(&self.head, weight_decay);
            for (g, l) in col_g.iter_mut().zip(&column.layers) {
                g.add_weight_decay(l, weight_decay);
            }
            if let (Some(g), Some(a)) = (aux_g.as_mut(), self.aux.as_ref()) {
                g.add_weight_decay(a, weight_decay);
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        Ok((
            loss,
            DerGrads {
                column: col_g,
                head: head_g,
                aux: aux_g,
            },
        ))
    }

    pub fn step(&mut self, g: &DerGrads, lr: f64) {
        let column = self.columns.last_mut().expect("a trainable column");
        for (l, lg) in column.layers.iter_mut().zip(&g.column) {
            l.weight.scaled_add(-lr, &lg.weight);
            l.bias.scaled_add(-lr, &lg.bias);
        }
        self.head.weight.scaled_add(-lr, &g.head.weight);
        self.head.bias.scaled_add(-lr, &g.head.bias);
        if let (Some(a), Some(ag)) = (self.aux.as_mut(), g.aux.as_ref()) {
            a.weight.scaled_add(-lr, &ag.weight);
            a.bias.scaled_add(-lr, &ag.bias);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.columns.iter().all(Backbone::all_finite)
            && self.head.all_finite()
            && self.aux.as_ref().is_none_or(Linear::all_finite)
    }
}

fn concat_cols(rows: usize, parts: &[Array2<f64>]) -> Array2<f64> {
    if parts.is_empty() {
        return Array2::zeros((rows, 0));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("equal row counts")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn closed_form_param_count() {
        let (d, h) = (16, 32);
        let mut net = DerNet::new(d, &[h]);
        let backbone = d * h + h;
        assert_eq!(net.backbone_params(), backbone);
        let mut rng = seed::rng(0);
        let mut classes = 0;
        for t in 1..=5 {
            net.expand(2, &mut rng);
            net.drop_aux();
            classes += 2;
            let head = (t * h) * classes + classes;
            assert_eq!(net.param_count(), t * backbone + head);
        }
    }

    #[test]
    fn expand_copies_old_head() {
        let mut rng = seed::rng(1);
        let mut net = DerNet::new(3, &[4]);
        net.expand(2, &mut rng);
        let old = net.head.clone();
        net.expand(3, &mut rng);
        assert_eq!(net.head.weight.slice(s![..2, ..4]), old.weight);
        assert_eq!(net.head.bias.slice(s![..2]), old.bias);
        assert_eq!(net.aux.as_ref().unwrap().output_dim(), 4);
        assert_eq!(net.num_outputs(), 5);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seed::rng(2);
        let mut net = DerNet::new(3, &[5]);
        net.expand(2, &mut rng);
        net.expand(2, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let targets = [0, 1, 2, 3, 2, 0];
        let frozen = net.frozen_features(x.view());
        let (lam, wd) = (0.7, 0.01);
        let (_, g) = net.loss_and_grad(x.view(), frozen.view(), &targets, 2, lam, wd).unwrap();
        let eps = 1e-5;
        let loss = |n: &DerNet| n.loss_and_grad(x.view(), frozen.view(), &targets, 2, lam, wd).unwrap().0;
        let check = |a: f64, num: f64| {
            let err = (a - num).abs();
            assert!(err <= 1e-4 * a.abs().max(num.abs()) || err <= 1e-9, "{a} vs {num}");
        };
        for idx in 0..net.head.weight.len() {
            let mut p = net.clone();
            p.head.weight.as_slice_mut().unwrap()[idx] += eps;
            let mut m = net.clone();
            m.head.weight.as_slice_mut().unwrap()[idx] -= eps;
            check(g.head.weight.as_slice().unwrap()[idx], (loss(&p) - loss(&m)) / (2.0 * eps));
        }
        for idx in 0..net.columns[1].layers[0].weight.len() {
            let mut p = net.clone();
            p.columns[1].layers[0].weight.as_slice_mut().unwrap()[idx] += eps;
            let mut m = net.clone();
            m.columns[1].layers[0].weight.as_slice_mut().unwrap()[idx] -= eps;
            check(g.column[0].weight.as_slice().unwrap()[idx], (loss(&p) - loss(&m)) / (2.0 * eps));
        }
        let aux_w = &g.aux.as_ref().unwrap().weight;
        for idx in 0..aux_w.len() {
            let mut p = net.clone();
            p.aux.as_mut().unwrap().weight.as_slice_mut().unwrap()[idx] += eps;
            let mut m = net.clone();
            m.aux.as_mut().unwrap().weight.as_slice_mut().unwrap()[idx] -= eps;
            check(aux_w.as_slice().unwrap()[idx], (loss(&p) - loss(&m)) / (2.0 * eps));
        }
    }
}
