//! Class-incremental learners built on the MLP trainer.
//!
//! Every learner keeps a single model whose output layer grows as classes
//! arrive. The first task is trained with the fixed initial schedule; later
//! tasks use the sampled hyperparameters. Methods that rehearse keep a
//! bounded exemplar memory, rebuilt after each task.

mod bic;
mod der;
mod hyper;
mod wa;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::metrics::accuracy;
use crate::nn::{train_batches, Backbone, KdSource, Linear, LossConfig, Mlp};
use crate::scenario::{rebuild_exemplar_memory, ExemplarMemory, Task};
use crate::{seed, Error, Result};

pub use self::bic::{bic_correct, fit_bias, stratified_holdout, BiasParams};
pub use self::der::{DerGrads, DerNet};
pub use self::hyper::{InitHyperparams, LearnerHyperparams};
pub use self::wa::wa_align;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmId {
    Finetune,
    Replay,
    Icarl,
    Wa,
    Bic,
    Der,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 6] = [
        AlgorithmId::Finetune,
        AlgorithmId::Replay,
        AlgorithmId::Icarl,
        AlgorithmId::Wa,
        AlgorithmId::Bic,
        AlgorithmId::Der,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::Finetune => "finetune",
            AlgorithmId::Replay => "replay",
            AlgorithmId::Icarl => "icarl",
            AlgorithmId::Wa => "wa",
            AlgorithmId::Bic => "bic",
            AlgorithmId::Der => "der",
        }
    }

    pub fn uses_memory(self) -> bool {
        self != AlgorithmId::Finetune
    }

    pub fn uses_kd(self) -> bool {
        matches!(self, AlgorithmId::Icarl | AlgorithmId::Wa | AlgorithmId::Bic)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown algorithm '{s}' (expected one of finetune, replay, icarl, wa, bic, der)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Status {
    Healthy,
    Diverged { task_index: usize, reason: String },
}

impl Status {
    pub fn is_diverged(&self) -> bool {
        matches!(self, Status::Diverged { .. })
    }
}

/// Settings fixed for a whole experiment (not tuned).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSettings {
    /// Hidden layer widths of the feature extractor.
    pub hidden: Vec<usize>,
    /// Exemplar memory size, in examples.
    pub memory_capacity: usize,
    pub init: InitHyperparams,
    /// Gradient-descent iterations and step size for the bias-correction fit.
    pub bias_iterations: usize,
    pub bias_lr: f64,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            memory_capacity: 200,
            init: InitHyperparams::default(),
            bias_iterations: 300,
            bias_lr: 0.1,
        }
    }
}

impl LearnerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if !(self.bias_lr > 0.0) {
            return Err(Error::config("bias_lr must be > 0"));
        }
        self.init.validate()
    }
}

/// What happened while training one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLog {
    pub task_index: usize,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub training_seconds: f64,
    pub post_training_seconds: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Single(Mlp),
    Expanded(DerNet),
}

/// A learner partway through a task sequence.
#[derive(Debug, Clone)]
pub struct LearnerState {
    algorithm: AlgorithmId,
    settings: LearnerSettings,
    model: Model,
    /// Output column `k` predicts class `classes[k]`.
    classes: Vec<u32>,
    task_of_class: Vec<usize>,
    bias: Vec<BiasParams>,
    memory: ExemplarMemory,
    tasks_trained: usize,
    status: Status,
    trial_seed: u64,
}

impl LearnerState {
    pub fn new(algorithm: AlgorithmId, settings: &LearnerSettings, input_dim: usize, trial_seed: u64) -> Result<Self> {
        settings.validate()?;
        if input_dim == 0 {
            return Err(Error::contract("input dimension must be >= 1"));
        }
        let model = if algorithm == AlgorithmId::Der {
            Model::Expanded(DerNet::new(input_dim, &settings.hidden))
        } else {
            let mut rng = seed::derived_rng(trial_seed, "init", &[]);
            let backbone = Backbone::new(input_dim, &settings.hidden, &mut rng);
            let feat = backbone.output_dim(input_dim);
            Model::Single(Mlp {
                backbone,
                head: Linear::zeros(feat, 0),
            })
        };
        let capacity = if algorithm.uses_memory() { settings.memory_capacity } else { 0 };
        Ok(Self {
            algorithm,
            settings: settings.clone(),
            model,
            classes: Vec::new(),
            task_of_class: Vec::new(),
            bias: Vec::new(),
            memory: ExemplarMemory::new(capacity),
            tasks_trained: 0,
            status: Status::Healthy,
            trial_seed,
        })
    }

    pub fn algorithm(&self) -> AlgorithmId {
        self.algorithm
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn tasks_trained(&self) -> usize {
        self.tasks_trained
    }

    pub fn memory(&self) -> &ExemplarMemory {
        &self.memory
    }

    pub fn seen_classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        match &self.model {
            Model::Single(m) => Some(m),
            Model::Expanded(_) => None,
        }
    }

    pub fn der(&self) -> Option<&DerNet> {
        match &self.model {
            Model::Expanded(d) => Some(d),
            Model::Single(_) => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.model {
            Model::Single(m) => m.param_count(),
            Model::Expanded(d) => d.param_count(),
        }
    }

    fn column_of(&self, class: u32) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::contract(format!("class {class} has not been seen")))
    }

    fn targets(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        data.labels().iter().map(|&l| self.column_of(l)).collect()
    }

    fn raw_logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match &self.model {
            Model::Single(m) => m.forward(x),
            Model::Expanded(d) => d.forward(x),
        }
    }

    /// Logits over seen classes, bias-corrected where applicable.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.raw_logits(x)?;
        if self.algorithm == AlgorithmId::Bic && !self.bias.is_empty() {
            bic_correct(z.view(), &self.task_of_class, &self.bias)
        } else {
            Ok(z)
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<u32>> {
        if self.classes.is_empty() {
            return Err(Error::contract("cannot predict before the first task"));
        }
        let z = self.logits(x)?;
        Ok(z.axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect())
    }

    /// Accuracy on the union of the validation sets of tasks `1..=t`, where
    /// `t = sets.len()`.
    pub fn evaluate_upto(&self, sets: &[&LabeledDataset]) -> Result<f64> {
        if sets.is_empty() || sets.len() > self.tasks_trained {
            return Err(Error::contract(format!(
                "asked for Acc_{} after {} trained task(s)",
                sets.len(),
                self.tasks_trained
            )));
        }
        let all = LabeledDataset::concat("eval", sets)?;
        let pred = self.predict(all.features().view())?;
        accuracy(&pred, all.labels())
    }

    /// Trains task `task_index` (0-based). Divergence is not an error: the
    /// learner records it in its status and stops accepting tasks.
    pub fn train_task(&mut self, task_index: usize, task: &Task, hp: &LearnerHyperparams) -> Result<TaskLog> {
        if self.status.is_diverged() {
            return Err(Error::contract("learner has diverged and cannot train further"));
        }
        if task_index != self.tasks_trained {
            return Err(Error::contract(format!(
                "expected task {}, got task {task_index}",
                self.tasks_trained
            )));
        }
        if let Some(c) = task.class_ids.iter().find(|c| self.classes.contains(c)) {
            return Err(Error::contract(format!("class {c} was already seen")));
        }
        let started = Instant::now();
        let outcome = self.fit(task_index, task, hp);
        let mut log = TaskLog {
            task_index,
            epochs: 0,
            final_loss: None,
            training_seconds: 0.0,
            post_training_seconds: 0.0,
            diverged: false,
        };
        match outcome {
            Ok((epochs, loss, post)) => {
                log.epochs = epochs;
                log.final_loss = loss;
                log.post_training_seconds = post;
            }
            Err(Error::Diverged(reason)) => {
                log.diverged = true;
                self.status = Status::Diverged { task_index, reason };
            }
            Err(e) => return Err(e),
        }
        log.training_seconds = started.elapsed().as_secs_f64() - log.post_training_seconds;
        if !log.diverged {
            if self.algorithm.uses_memory() {
                let s = seed::derive(self.trial_seed, "memory", &[task_index as u64]);
                self.memory = rebuild_exemplar_memory(&self.memory, &task.train, s)?;
            }
            self.tasks_trained += 1;
        }
        Ok(log)
    }

    /// Returns (epochs, last mean loss, post-training seconds).
    fn fit(&mut self, t: usize, task: &Task, hp: &LearnerHyperparams) -> Result<(usize, Option<f64>, f64)> {
        let first = t == 0;
        let (schedule, weight_decay) = if first {
            let init = &self.settings.init;
            (init.schedule(hp.scheduler)?, init.weight_decay)
        } else {
            (hp.schedule()?, hp.weight_decay)
        };
        let config = LossConfig { weight_decay };

        // rows of `pool`: new-task training rows first, then exemplars
        let n_new = task.train.len();
        let mut pool = match self.memory.store() {
            Some(m) => LabeledDataset::concat("train-pool", &[&task.train, m])?,
            None => task.train.clone(),
        };
        let mut n_mem = pool.len() - n_new;

        let mut heldout = None;
        if self.algorithm == AlgorithmId::Bic && !first {
            let ratio = hp.split_ratio.ok_or_else(|| Error::config("bic needs split_ratio"))?;
            let s = seed::derive(self.trial_seed, "bic-holdout", &[t as u64]);
            let (train_rows, held_rows) = stratified_holdout(&pool, ratio, s)?;
            let (mut new_rows, mut mem_rows): (Vec<usize>, Vec<usize>) =
                train_rows.into_iter().partition(|&r| r < n_new);
            new_rows.sort_unstable();
            mem_rows.sort_unstable();
            let n_kept_new = new_rows.len();
            new_rows.extend(mem_rows);
            heldout = Some(pool.subset("bic-heldout", &held_rows));
            pool = pool.subset("train-pool", &new_rows);
            n_mem = pool.len() - n_kept_new;
        }
        let n_new = pool.len() - n_mem;

        let kd = match (hp.kd_lambda, hp.kd_temperature) {
            (Some(lambda), Some(temperature)) if !first && lambda != 0.0 => Some(KdSource {
                teacher_logits: self.raw_logits(pool.features().view())?,
                temperature,
                lambda,
            }),
            _ => None,
        };

        let old_classes = self.classes.len();
        let mut init_rng = seed::derived_rng(self.trial_seed, "init", &[t as u64 + 1]);
        match &mut self.model {
            Model::Single(m) => m.head.grow_outputs(task.class_ids.len(), &mut init_rng),
            Model::Expanded(d) => d.expand(task.class_ids.len(), &mut init_rng),
        }
        self.classes.extend_from_slice(&task.class_ids);
        self.task_of_class.extend(std::iter::repeat_n(t, task.class_ids.len()));
        let targets = self.targets(&pool)?;

        let x = pool.features().view();
        let frozen = match &self.model {
            Model::Expanded(d) => Some(d.frozen_features(x)),
            Model::Single(_) => None,
        };
        let aux_lambda = hp.aux_lambda.unwrap_or(0.0);
        let mut last_loss = None;
        for e in 0..schedule.epochs {
            let lr = schedule.lr_at(e)?;
            let epoch_seed = seed::derive(self.trial_seed, "epoch", &[t as u64, e as u64]);
            let batches = make_batches(n_new, n_mem, hp.batch_size, hp.exemplar_batch_size, epoch_seed);
            let mean = match &mut self.model {
                Model::Single(m) => train_batches(m, x, &targets, &batches, lr, &config, kd.as_ref())?.mean_loss,
                Model::Expanded(d) => {
                    let frozen = frozen.as_ref().expect("frozen features for expanded model");
                    der_epoch(d, x, frozen.view(), &targets, &batches, lr, old_classes, aux_lambda, weight_decay)?
                }
            };
            last_loss = Some(mean);
        }

        let post_started = Instant::now();
        match &mut self.model {
            Model::Single(m) if !first && self.algorithm == AlgorithmId::Wa => {
                let old: Vec<usize> = (0..old_classes).collect();
                let new: Vec<usize> = (old_classes..self.classes.len()).collect();
                m.head.weight = wa_align(&m.head.weight, &old, &new)?;
            }
            Model::Expanded(d) => d.drop_aux(),
            _ => {}
        }
        if self.algorithm == AlgorithmId::Bic {
            let params = match &heldout {
                Some(h) => {
                    let z = self.raw_logits(h.features().view())?;
                    let new: Vec<usize> = (old_classes..self.classes.len()).collect();
                    fit_bias(z.view(), &self.targets(h)?, &new, self.settings.bias_iterations, self.settings.bias_lr)?
                }
                None => BiasParams::IDENTITY,
            };
            self.bias.push(params);
        }
        let post = post_started.elapsed().as_secs_f64();
        Ok((schedule.epochs, last_loss, post))
    }
}


/// Row batches over a pool whose first `n_new` rows are new-task data and
/// whose last `n_mem` rows are exemplars. Without an exemplar batch size the
/// pool is shuffled as one set. With one, each batch of new data is joined
/// by that many exemplars, cycling through a shuffled memory.
fn make_batches(n_new: usize, n_mem: usize, batch_size: usize, exemplar_batch: Option<usize>, rng_seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(rng_seed);
    match exemplar_batch {
        Some(eb) if n_mem > 0 && n_new > 0 => {
            let mut new: Vec<usize> = (0..n_new).collect();
            new.shuffle(&mut rng);
            let mut mem: Vec<usize> = (n_new..n_new + n_mem).collect();
            mem.shuffle(&mut rng);
            let mut cursor = 0;
            new.chunks(batch_size)
                .map(|chunk| {
                    let mut b = chunk.to_vec();
                    for _ in 0..eb.min(n_mem) {
                        b.push(mem[cursor % n_mem]);
                        cursor += 1;
                    }
                    b
                })
                .collect()
        }
        _ => {
            let mut all: Vec<usize> = (0..n_new + n_mem).collect();
            all.shuffle(&mut rng);
            all.chunks(batch_size).map(<[usize]>::to_vec).collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn der_epoch(
    net: &mut DerNet,
    x: ArrayView2<'_, f64>,
    frozen: ArrayView2<'_, f64>,
    targets: &[usize],
    batches: &[Vec<usize>],
    lr: f64,
    old_classes: usize,
    aux_lambda: f64,
    weight_decay: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for rows in batches {
        let xb = x.select(Axis(0), rows);
        let fb = frozen.select(Axis(0), rows);
        let y: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
        let (loss, g) = net.loss_and_grad(xb.view(), fb.view(), &y, old_classes, aux_lambda, weight_decay)?;
        net.step(&g, lr);
        total += loss;
    }
    if !net.all_finite() {
        return Err(Error::Diverged("non-finite parameters after SGD step".into()));
    }
    Ok(total / batches.len().max(1) as f64)
}
