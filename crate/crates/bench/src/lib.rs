//! Fixtures shared by the benchmarks.

use clproto::data::synth_gaussians;
use clproto::learners::{AlgorithmId, LearnerSettings};
use clproto::nn::Mlp;
use clproto::protocol::{tuning_cells, Cell, HpValue, HyperparameterSpace, NativeRunner, ProtocolSettings};
use clproto::scenario::ScenarioSpec;
use clproto::LabeledDataset;

/// Gaussian classes plus an MLP `[dim, hidden.., classes]` and dense targets.
pub fn mlp_fixture(classes: usize, dim: usize, per_class: usize, hidden: &[usize]) -> (Mlp, LabeledDataset, Vec<usize>) {
    let data = synth_gaussians(classes, dim, per_class, 3.0, 1).expect("valid fixture");
    let mut dims = vec![dim];
    dims.extend_from_slice(hidden);
    dims.push(classes);
    let mlp = Mlp::new(&dims, &mut clproto::seed::rng(2)).expect("valid dims");
    let targets = data.labels().iter().map(|&l| l as usize).collect();
    (mlp, data, targets)
}

/// Everything needed to run one desk-scale trial: 10 classes in 5 tasks of 2,
/// 40 examples per class, one hidden layer of 32.
pub struct TrialFixture {
    pub runner: NativeRunner,
    pub data: LabeledDataset,
    pub scenario: ScenarioSpec,
    pub cell: Cell,
}

pub fn trial_fixture(algorithm: AlgorithmId) -> TrialFixture {
    let data = synth_gaussians(10, 16, 40, 3.0, 1).expect("valid fixture");
    let values: Vec<(String, Vec<HpValue>)> = [
        ("epochs", HpValue::Int(3)),
        ("lr", HpValue::Real(0.05)),
        ("batch_size", HpValue::Int(16)),
        ("weight_decay", HpValue::Real(1e-4)),
        ("lr_scheduler", HpValue::Text("Cosine".into())),
        ("kd_temperature", HpValue::Real(2.0)),
        ("kd_lambda", HpValue::Real(1.0)),
        ("split_ratio", HpValue::Real(0.2)),
        ("aux_lambda", HpValue::Real(1.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), vec![v]))
    .collect();
    let space = HyperparameterSpace::new(values).expect("valid space");
    let scenario = ScenarioSpec::new(2, 2, 0.2).expect("valid scenario");
    let settings = ProtocolSettings {
        scenario,
        samples: 1,
        trials: 1,
        base_seed: 3,
        jobs: 1,
    };
    let mut learner = LearnerSettings {
        hidden: vec![32],
        memory_capacity: 100,
        ..LearnerSettings::default()
    };
    learner.init.init_scale = 0.05;
    TrialFixture {
        runner: NativeRunner {
            algorithm,
            settings: learner,
        },
        data,
        scenario,
        cell: tuning_cells(&space, &settings).remove(0),
    }
}
