mod common;

use clproto::learners::{AlgorithmId, LearnerSettings, LearnerState, Status};
use clproto::{Error, LabeledDataset};
use common::{full_assignment, hyper, sequence};
use serde_json::json;

fn settings(capacity: usize) -> LearnerSettings {
    LearnerSettings {
        hidden: vec![32],
        memory_capacity: capacity,
        ..LearnerSettings::default()
    }
}

fn with(overrides: serde_json::Value) -> serde_json::Value {
    let mut base = full_assignment();
    for (k, v) in overrides.as_object().unwrap() {
        base[k] = v.clone();
    }
    base
}

/// Accuracy on task 1's validation data right after task 1 and after task 2.
fn task1_accuracy(algo: AlgorithmId, capacity: usize) -> (f64, f64) {
    let (_, seq) = sequence(4, 100, 2, 2, 4.0, 1);
    let hp = hyper(algo, with(json!({"epochs": 10, "lr": 0.1})));
    let mut l = LearnerState::new(algo, &settings(capacity), 16, 5).unwrap();
    l.train_task(0, &seq.tasks[0], &hp).unwrap();
    let before = l.evaluate_upto(&[&seq.tasks[0].val]).unwrap();
    l.train_task(1, &seq.tasks[1], &hp).unwrap();
    let pred = l.predict(seq.tasks[0].val.features().view()).unwrap();
    let after = clproto::metrics::accuracy(&pred, seq.tasks[0].val.labels()).unwrap();
    (before, after)
}

#[test]
fn single_task_classifier_on_separated_gaussians() {
    // 10 classes x 100 examples, separation 4: one task with all classes
    let (_, seq) = sequence(10, 100, 10, 10, 4.0, 1);
    assert_eq!(seq.len(), 1);
    let hp = hyper(AlgorithmId::Finetune, full_assignment());
    let mut l = LearnerState::new(AlgorithmId::Finetune, &settings(0), 16, 1).unwrap();
    l.train_task(0, &seq.tasks[0], &hp).unwrap();
    let acc = l.evaluate_upto(&[&seq.tasks[0].val]).unwrap();
    assert!(acc >= 0.95, "val accuracy {acc}");
}

#[test]
fn finetune_forgets_the_first_task() {
    let (before, after) = task1_accuracy(AlgorithmId::Finetune, 0);
    // oracle run: 1.00 -> 0.00
    assert!(before - after >= 0.20, "before {before}, after {after}");
}

#[test]
fn replay_retains_the_first_task() {
    let (_, ft_after) = task1_accuracy(AlgorithmId::Finetune, 0);
    let (_, rp_after) = task1_accuracy(AlgorithmId::Replay, 1000);
    // oracle run: replay 0.99 vs finetune 0.00; margin fixed at 50 points
    assert!(rp_after - ft_after >= 0.50, "replay {rp_after}, finetune {ft_after}");
}

#[test]
fn icarl_without_distillation_is_replay() {
    let (_, seq) = sequence(6, 30, 2, 2, 3.0, 4);
    let a = with(json!({"kd_lambda": 0.0}));
    let mut replay = LearnerState::new(AlgorithmId::Replay, &settings(20), 16, 9).unwrap();
    let mut icarl = LearnerState::new(AlgorithmId::Icarl, &settings(20), 16, 9).unwrap();
    for (t, task) in seq.tasks.iter().enumerate() {
        replay.train_task(t, task, &hyper(AlgorithmId::Replay, a.clone())).unwrap();
        icarl.train_task(t, task, &hyper(AlgorithmId::Icarl, a.clone())).unwrap();
    }
    assert_eq!(replay.mlp().unwrap(), icarl.mlp().unwrap());
    // and with distillation switched on they part ways
    let mut kd = LearnerState::new(AlgorithmId::Icarl, &settings(20), 16, 9).unwrap();
    for (t, task) in seq.tasks.iter().enumerate() {
        kd.train_task(t, task, &hyper(AlgorithmId::Icarl, full_assignment())).unwrap();
    }
    assert_ne!(replay.mlp().unwrap(), kd.mlp().unwrap());
}

#[test]
fn der_freezes_earlier_columns() {
    let (_, seq) = sequence(8, 20, 2, 2, 3.0, 2);
    let hp = hyper(AlgorithmId::Der, full_assignment());
    let mut l = LearnerState::new(AlgorithmId::Der, &settings(40), 16, 3).unwrap();
    let mut snapshots = Vec::new();
    for (t, task) in seq.tasks.iter().enumerate() {
        l.train_task(t, task, &hp).unwrap();
        let net = l.der().unwrap();
        assert_eq!(net.columns.len(), t + 1);
        assert!(net.aux.is_none());
        for (k, snap) in snapshots.iter().enumerate() {
            assert_eq!(&net.columns[k], snap, "column {k} changed while training task {t}");
        }
        snapshots.push(net.columns[t].clone());
    }
}

#[test]
fn der_growth_is_affine_with_closed_form() {
    // 10 tasks of 2 classes, one hidden layer of 32
    let (_, seq) = sequence(20, 10, 2, 2, 3.0, 6);
    let hp = hyper(AlgorithmId::Der, with(json!({"epochs": 1})));
    let mut s = settings(40);
    s.init.init_scale = 0.01;
    let mut der = LearnerState::new(AlgorithmId::Der, &s, 16, 1).unwrap();
    let mut replay = LearnerState::new(AlgorithmId::Replay, &s, 16, 1).unwrap();
    let (d, h) = (16, 32);
    let backbone = d * h + h;
    let mut der_counts = Vec::new();
    let mut replay_counts = Vec::new();
    for (t, task) in seq.tasks.iter().enumerate() {
        der.train_task(t, task, &hp).unwrap();
        replay.train_task(t, task, &hyper(AlgorithmId::Replay, with(json!({"epochs": 1})))).unwrap();
        let tt = t + 1;
        let classes = 2 * tt;
        assert_eq!(der.param_count(), tt * backbone + (tt * h) * classes + classes);
        assert_eq!(replay.param_count(), backbone + h * classes + classes);
        der_counts.push(der.param_count() as i64);
        replay_counts.push(replay.param_count() as i64);
    }
    // first differences grow by the head's linear term only: constant second difference
    let diffs: Vec<i64> = der_counts.windows(2).map(|w| w[1] - w[0]).collect();
    let second: Vec<i64> = diffs.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(second.iter().all(|&x| x == second[0]), "{second:?}");
    // head-only growth: constant increment of (h + 1) per new class
    assert!(replay_counts.windows(2).all(|w| w[1] - w[0] == 2 * (h as i64 + 1)));
    assert!(der_counts.iter().zip(&replay_counts).skip(1).all(|(a, b)| a > b));
}

#[test]
fn overflowing_lr_marks_the_learner_diverged() {
    let (_, seq) = sequence(6, 20, 2, 2, 3.0, 3);
    for algo in AlgorithmId::ALL {
        let hp = hyper(algo, with(json!({"lr": 1e30})));
        let mut l = LearnerState::new(algo, &settings(30), 16, 1).unwrap();
        // the first task uses the fixed initial schedule and stays healthy
        let log = l.train_task(0, &seq.tasks[0], &hp).unwrap();
        assert!(!log.diverged, "{algo}");
        let log = l.train_task(1, &seq.tasks[1], &hp).unwrap();
        assert!(log.diverged, "{algo}");
        assert!(matches!(l.status(), Status::Diverged { task_index: 1, .. }), "{algo}");
        assert_eq!(l.tasks_trained(), 1);
        // absorbing
        assert!(matches!(l.train_task(1, &seq.tasks[1], &hp), Err(Error::Contract(_))));
        let json = serde_json::to_string(l.status()).unwrap();
        assert!(json.contains("\"diverged\"") && json.contains("\"task_index\":1"), "{json}");
    }
}

#[test]
fn evaluate_upto_rejects_untrained_tasks() {
    let (_, seq) = sequence(4, 20, 2, 2, 3.0, 3);
    let mut l = LearnerState::new(AlgorithmId::Replay, &settings(10), 16, 1).unwrap();
    assert!(l.evaluate_upto(&[&seq.tasks[0].val]).is_err());
    l.train_task(0, &seq.tasks[0], &hyper(AlgorithmId::Replay, full_assignment())).unwrap();
    assert!(l.evaluate_upto(&[&seq.tasks[0].val]).is_ok());
    assert!(matches!(
        l.evaluate_upto(&[&seq.tasks[0].val, &seq.tasks[1].val]),
        Err(Error::Contract(_))
    ));
    assert!(l.train_task(2, &seq.tasks[1], &hyper(AlgorithmId::Replay, full_assignment())).is_err());
}

#[test]
fn memory_stays_balanced_through_training() {
    let (_, seq) = sequence(10, 20, 1, 1, 3.0, 8);
    let hp = hyper(AlgorithmId::Replay, with(json!({"epochs": 1})));
    let mut l = LearnerState::new(AlgorithmId::Replay, &settings(25), 16, 2).unwrap();
    for (t, task) in seq.tasks.iter().enumerate() {
        l.train_task(t, task, &hp).unwrap();
        let mem = l.memory();
        assert!(mem.len() <= 25);
        let counts: Vec<usize> = mem.class_counts().values().copied().collect();
        assert_eq!(counts.len(), t + 1);
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1, "{counts:?}");
    }
    let finetune = LearnerState::new(AlgorithmId::Finetune, &settings(25), 16, 2).unwrap();
    assert_eq!(finetune.memory().capacity(), 0);
}

fn scramble(ds: &LabeledDataset) -> LabeledDataset {
    let noisy = ds.features().mapv(|v| v * -3.0 + 7.0);
    LabeledDataset::new(ds.name(), noisy, ds.labels().to_vec()).unwrap()
}

#[test]
fn training_never_reads_validation_data() {
    let (_, seq) = sequence(6, 20, 2, 2, 3.0, 5);
    let mut scrambled = seq.clone();
    for task in &mut scrambled.tasks {
        task.val = scramble(&task.val);
    }
    for algo in AlgorithmId::ALL {
        let hp = hyper(algo, full_assignment());
        let mut a = LearnerState::new(algo, &settings(20), 16, 4).unwrap();
        let mut b = LearnerState::new(algo, &settings(20), 16, 4).unwrap();
        for t in 0..seq.len() {
            a.train_task(t, &seq.tasks[t], &hp).unwrap();
            b.train_task(t, &scrambled.tasks[t], &hp).unwrap();
        }
        assert_eq!(a.mlp(), b.mlp(), "{algo}");
        assert_eq!(a.der(), b.der(), "{algo}");
        let x = seq.tasks[0].val.features().view();
        assert_eq!(a.logits(x).unwrap(), b.logits(x).unwrap(), "{algo}");
    }
}

#[test]
fn bias_fitting_time_is_itemised() {
    let (_, seq) = sequence(6, 30, 2, 2, 3.0, 5);
    let hp = hyper(AlgorithmId::Bic, full_assignment());
    let mut l = LearnerState::new(AlgorithmId::Bic, &settings(30), 16, 4).unwrap();
    let first = l.train_task(0, &seq.tasks[0], &hp).unwrap();
    let second = l.train_task(1, &seq.tasks[1], &hp).unwrap();
    assert!(first.training_seconds >= 0.0);
    assert!(second.post_training_seconds > 0.0);
    let total = second.training_seconds + second.post_training_seconds;
    assert!(total > second.training_seconds);
}
