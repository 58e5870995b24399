#![allow(dead_code)]

use clproto::data::synth_gaussians;
use clproto::learners::{AlgorithmId, LearnerHyperparams};
use clproto::protocol::{HpValue, HyperparameterAssignment, HyperparameterSpace};
use clproto::scenario::{make_scenario, ScenarioSpec, TaskSequence};
use clproto::LabeledDataset;

pub fn hp_value(v: &serde_json::Value) -> HpValue {
    serde_json::from_value(v.clone()).unwrap()
}

/// Builds an assignment from a JSON object literal.
pub fn assignment(json: serde_json::Value) -> HyperparameterAssignment {
    let values = json
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), hp_value(v)))
        .collect();
    HyperparameterAssignment { index: 0, values }
}

/// Space from a JSON object of name -> value list.
pub fn space(json: serde_json::Value) -> HyperparameterSpace {
    HyperparameterSpace::new(json.as_object().unwrap().iter().map(|(k, v)| {
        let vals: Vec<HpValue> = serde_json::from_value(v.clone()).unwrap();
        (k.clone(), vals)
    }))
    .unwrap()
}

/// Every hyperparameter any built-in learner needs, with desk-scale values.
pub fn full_assignment() -> serde_json::Value {
    serde_json::json!({
        "epochs": 5, "lr": 0.05, "lr_scheduler": "Cosine", "batch_size": 16,
        "weight_decay": 0.0001, "num_milestones": 2, "lr_decay": 0.1,
        "kd_temperature": 2.0, "kd_lambda": 1.0, "split_ratio": 0.2, "aux_lambda": 1.0
    })
}

pub fn hyper(algo: AlgorithmId, json: serde_json::Value) -> LearnerHyperparams {
    LearnerHyperparams::from_assignment(algo, &assignment(json)).unwrap().0
}

/// Seeded Gaussian classes with the identity class ordering.
pub fn sequence(classes: usize, per_class: usize, first: usize, inc: usize, separation: f64, seed: u64) -> (LabeledDataset, TaskSequence) {
    let data = synth_gaussians(classes, 16, per_class, separation, seed).unwrap();
    let ordering: Vec<u32> = (0..classes as u32).collect();
    let spec = ScenarioSpec::new(first, inc, 0.2).unwrap();
    let seq = make_scenario(&data, &spec, &ordering, seed).unwrap();
    (data, seq)
}

/// Largest relative error between analytic gradients and central finite
/// differences (eps 1e-5) for a random MLP drawn from `seed`: 1-3 hidden
/// layers, dims <= 12, optional distillation and weight decay. Also returns
/// the parameter count.
pub fn gradient_check(seed: u64) -> (f64, usize) {
    gradient_check_eps(seed, 1e-5)
}

pub fn gradient_check_eps(seed: u64, eps: f64) -> (f64, usize) {
    use clproto::nn::{loss_and_grad, KdTarget, LossConfig, Mlp};
    use ndarray::Array2;
    use rand::Rng;

    let mut rng = clproto::seed::rng(seed);
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(2..=8)];
    for _ in 0..depth {
        dims.push(rng.random_range(2..=12));
    }
    let classes = rng.random_range(2..=6);
    dims.push(classes);
    let mut mlp = Mlp::new(&dims, &mut rng).unwrap();
    // zero biases can leave a pre-activation exactly on the ReLU kink
    for l in mlp.backbone.layers.iter_mut().chain(std::iter::once(&mut mlp.head)) {
        l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let n = rng.random_range(1..=6);
    let x = Array2::from_shape_simple_fn((n, dims[0]), || rng.random_range(-2.0..2.0));
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let k = rng.random_range(1..=classes);
    let teacher = Array2::from_shape_simple_fn((n, k), || rng.random_range(-3.0..3.0));
    let kd = rng.random_bool(0.7).then(|| KdTarget {
        teacher_logits: teacher.view(),
        temperature: rng.random_range(0.5..4.0),
        lambda: rng.random_range(0.1..2.0),
    });
    let config = LossConfig {
        weight_decay: if rng.random_bool(0.7) { rng.random_range(0.0..0.05) } else { 0.0 },
    };

    let (_, grads) = loss_and_grad(&mlp, x.view(), &y, kd.as_ref(), &config).unwrap();
    let analytic = grads.flat();
    let base = mlp.flat();
    // central differences are only an oracle where the ReLU pattern is
    // constant on [-eps, eps]; coordinates straddling a kink are skipped
    let pattern = |m: &Mlp| -> Vec<bool> {
        m.backbone.forward_cached(x.view()).inputs[1..].iter().flat_map(|a| a.iter().map(|&v| v > 0.0).collect::<Vec<_>>()).collect()
    };
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += eps;
        mlp.set_flat(&p).unwrap();
        let up = loss_and_grad(&mlp, x.view(), &y, kd.as_ref(), &config).unwrap().0;
        let up_pattern = pattern(&mlp);
        p[i] -= 2.0 * eps;
        mlp.set_flat(&p).unwrap();
        let down = loss_and_grad(&mlp, x.view(), &y, kd.as_ref(), &config).unwrap().0;
        if pattern(&mlp) != up_pattern {
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    (worst, base.len())
}

/// Small disjoint split: 8 synthetic classes, 4 per side.
pub fn small_split() -> clproto::SplitPair {
    let source = synth_gaussians(8, 16, 20, 3.0, 21).unwrap();
    clproto::data::disjoint_class_split(&source, 0.5, 4).unwrap()
}

pub fn native(algo: AlgorithmId) -> clproto::protocol::NativeRunner {
    clproto::protocol::NativeRunner {
        algorithm: algo,
        settings: clproto::learners::LearnerSettings {
            hidden: vec![8],
            memory_capacity: 20,
            init: clproto::learners::InitHyperparams {
                init_scale: 0.02,
                ..Default::default()
            },
            ..Default::default()
        },
    }
}

/// Protocol shape over the small split: tasks of 2 classes.
pub fn protocol(samples: usize, trials: usize, jobs: usize) -> clproto::protocol::ProtocolSettings {
    clproto::protocol::ProtocolSettings {
        scenario: ScenarioSpec::new(2, 2, 0.2).unwrap(),
        samples,
        trials,
        base_seed: 7,
        jobs,
    }
}

/// Cheap space with a fixed short initial schedule on the learner side.
pub fn small_space() -> HyperparameterSpace {
    space(serde_json::json!({
        "epochs": [1, 2], "lr": [0.05, 0.1], "batch_size": [8, 16],
        "lr_scheduler": ["StepLR", "Cosine"], "num_milestones": [1], "lr_decay": [0.1],
        "weight_decay": [0.0001], "kd_temperature": [2.0], "kd_lambda": [1.0], "aux_lambda": [1.0], "split_ratio": [0.2]
    }))
}

/// Hand-made evaluation record with the given accuracy series.
pub fn record(algorithm: &str, s: usize, acc: &[f64], params: &[usize]) -> clproto::RunRecord {
    use clproto::learners::Status;
    use clproto::records::{Timing, SCHEMA_VERSION};
    let series = clproto::TaskAccuracySeries::new(acc.to_vec()).unwrap();
    clproto::RunRecord {
        schema_version: SCHEMA_VERSION,
        algorithm: algorithm.to_string(),
        phase: clproto::Phase::Evaluation,
        r: None,
        s,
        assignment: assignment(serde_json::json!({"lr": 0.1, "epochs": 3})),
        ordering_seed: 11 + s as u64,
        trial_seed: 99 + s as u64,
        ordering: vec![1, 0, 3, 2],
        acc_series: acc.to_vec(),
        metrics: series.metric_pair().unwrap(),
        status: Status::Healthy,
        param_counts: params.to_vec(),
        inert: vec![],
        init_scale: 0.1,
        timing: Timing {
            cumulative_seconds: (1..=acc.len()).map(|t| t as f64 * 0.5).collect(),
            post_training_seconds: vec![0.0; acc.len()],
        },
    }
}

/// Report whose evaluation score is `(acc, avg_acc)`.
pub fn report(algorithm: &str, condition: &str, acc: f64, avg_acc: f64, diverged_trials: usize) -> clproto::PhaseReport {
    use clproto::protocol::{EvaluationSummary, TuningRow};
    use clproto::MetricPair;
    let best = assignment(serde_json::json!({"lr": 0.1}));
    let metrics = MetricPair { acc, avg_acc };
    clproto::PhaseReport {
        schema_version: clproto::records::SCHEMA_VERSION,
        algorithm: algorithm.to_string(),
        condition: condition.to_string(),
        scenario: ScenarioSpec::new(5, 5, 0.2).unwrap(),
        samples: 1,
        trials: 3,
        base_seed: 0,
        init_scale: 0.1,
        tuning: vec![TuningRow {
            r: 0,
            assignment: best.clone(),
            metrics,
            harmonic: metrics.harmonic(),
            trials: 3,
            diverged_trials: 0,
        }],
        best_r: 0,
        best,
        evaluation: EvaluationSummary {
            metrics,
            sd: MetricPair::ZERO,
            trials: 3,
            diverged_trials,
        },
    }
}
