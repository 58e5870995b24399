//! A small multilayer perceptron trained with plain minibatch SGD.
//!
//! Layers store weights as `(out, in)` so that row `k` of the final layer is
//! the classifier vector of output `k`. Rectified-linear activations sit
//! between layers; the final layer is linear.

mod loss;
mod schedule;
mod sgd;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::{Error, Result};

pub use self::loss::{loss_and_grad, logit_loss, log_softmax, softmax, KdTarget, LossConfig};
pub use self::schedule::{even_milestones, Schedule, ScheduleKind};
pub use self::sgd::{sgd_epoch, sgd_step, shuffled_batches, train_batches, EpochStats, KdSource};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.random_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Gradients for this layer and the gradient w.r.t. its input.
    pub fn backward(&self, input: ArrayView2<'_, f64>, d_out: &Array2<f64>) -> (LinearGrad, Array2<f64>) {
        let grad = LinearGrad {
            weight: d_out.t().dot(&input),
            bias: d_out.sum_axis(Axis(0)),
        };
        (grad, d_out.dot(&self.weight))
    }

    /// Appends `extra` output units initialised like [`Linear::glorot`].
    pub fn grow_outputs<R: Rng + ?Sized>(&mut self, extra: usize, rng: &mut R) {
        if extra == 0 {
            return;
        }
        let fresh = Linear::glorot(self.input_dim(), extra, rng);
        self.weight = ndarray::concatenate(Axis(0), &[self.weight.view(), fresh.weight.view()])
            .expect("matching input dims");
        self.bias = ndarray::concatenate(Axis(0), &[self.bias.view(), fresh.bias.view()])
            .expect("1-d concat");
    }

    pub fn all_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.weight.iter().map(|w| w * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearGrad {
    pub fn zeros_like(layer: &Linear) -> Self {
        Self {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }

    pub fn add_weight_decay(&mut self, layer: &Linear, weight_decay: f64) {
        if weight_decay != 0.0 {
            self.weight.scaled_add(weight_decay, &layer.weight);
        }
    }
}

/// Stack of linear layers, each followed by a ReLU. Used as the feature
/// extractor of an [`Mlp`] and as one column of an expanded network.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub layers: Vec<Linear>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    /// inputs[i] is the input of layer i; the last entry is the output.
    pub inputs: Vec<Array2<f64>>,
}

impl BackboneCache {
    pub fn output(&self) -> &Array2<f64> {
        self.inputs.last().expect("cache has the input at least")
    }
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = input;
        for &h in hidden {
            layers.push(Linear::glorot(prev, h, rng));
            prev = h;
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(Linear::input_dim)
    }

    pub fn output_dim(&self, input: usize) -> usize {
        self.layers.last().map_or(input, Linear::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> BackboneCache {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        inputs.push(x.to_owned());
        for layer in &self.layers {
            let z = layer.forward(inputs.last().unwrap().view());
            inputs.push(z.mapv(relu));
        }
        BackboneCache { inputs }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = layer.forward(h.view()).mapv(relu);
        }
        h
    }

    /// Backpropagates `d_out` (gradient w.r.t. the backbone output).
    pub fn backward(&self, cache: &BackboneCache, d_out: Array2<f64>) -> (Vec<LinearGrad>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            // ReLU'(z) = 1 where the activation is positive
            let act = &cache.inputs[i + 1];
            ndarray::Zip::from(&mut d).and(act).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            let (g, d_in) = layer.backward(cache.inputs[i].view(), &d);
            grads.push(g);
            d = d_in;
        }
        grads.reverse();
        (grads, d)
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Linear::all_finite)
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(Linear::weight_sq_norm).sum()
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Feature extractor plus linear classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub backbone: Backbone,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub backbone: Vec<LinearGrad>,
    pub head: LinearGrad,
}

impl Mlp {
    /// `layer_dims = [d, h1, ..., num_classes]`.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::contract(format!("invalid layer dims {layer_dims:?}")));
        }
        let n = layer_dims.len();
        let backbone = Backbone::new(layer_dims[0], &layer_dims[1..n - 1], rng);
        let head = Linear::glorot(layer_dims[n - 2], layer_dims[n - 1], rng);
        Ok(Self { backbone, head })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        let mut layers = layers;
        let head = layers.pop().ok_or_else(|| Error::contract("an MLP needs at least one layer"))?;
        let mut prev = layers.first().map_or(head.input_dim(), Linear::input_dim);
        for l in layers.iter().chain(std::iter::once(&head)) {
            if l.input_dim() != prev || l.bias.len() != l.output_dim() {
                return Err(Error::contract("incompatible consecutive layer dimensions"));
            }
            prev = l.output_dim();
        }
        Ok(Self {
            backbone: Backbone { layers },
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim().unwrap_or_else(|| self.head.input_dim())
    }

    pub fn num_outputs(&self) -> usize {
        self.head.output_dim()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.backbone.layers.iter().map(Linear::output_dim));
        dims.push(self.head.output_dim());
        dims
    }

    pub fn param_count(&self) -> usize {
        self.backbone.param_count() + self.head.param_count()
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let h = self.backbone.forward(batch);
        Ok(self.head.forward(h.view()))
    }

    pub(crate) fn check_input(&self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::contract(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.backbone.all_finite() && self.head.all_finite()
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.backbone.weight_sq_norm() + self.head.weight_sq_norm()
    }

    fn arrays(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.backbone.layers.iter().chain(std::iter::once(&self.head)) {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// All parameters in a fixed order (per layer: weight row-major, bias).
    pub fn flat(&self) -> Vec<f64> {
        self.arrays().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::contract("flat parameter length mismatch"));
        }
        let mut rest = values;
        for l in self.backbone.layers.iter_mut().chain(std::iter::once(&mut self.head)) {
            for arr in [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ] {
                let (head, tail) = rest.split_at(arr.len());
                arr.copy_from_slice(head);
                rest = tail;
            }
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in self.backbone.iter().chain(std::iter::once(&self.head)) {
            out.extend(g.weight.iter());
            out.extend(g.bias.iter());
        }
        out
    }
}
