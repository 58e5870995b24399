//! The two-phase protocol: random hyperparameter sampling, the R x S tuning
//! grid, best-set selection, and the S-trial evaluation phase.

mod engine;
pub mod space;

pub use self::engine::{
    aggregate_tuning, evaluation_cells, evaluation_phase, run_cell, run_cells, run_protocol, select_best_row,
    summarize_evaluation, tuning_cells, tuning_phase, Cell, EvaluationSummary, NativeRunner, PhaseReport,
    ProtocolSettings, TrialContext, TrialOutcome, TrialRunner, TuningRow,
};
pub use self::space::{sample_assignment, HpValue, HyperparameterAssignment, HyperparameterSpace};
