use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::{sample_assignment, HyperparameterAssignment, HyperparameterSpace};
use crate::data::{LabeledDataset, SplitPair};
use crate::learners::{AlgorithmId, LearnerHyperparams, LearnerSettings, LearnerState, Status};
use crate::metrics::{mean_and_sd, select_best_index, MetricPair, TaskAccuracySeries};
use crate::records::{canonical_sort, Phase, RunRecord, Timing, SCHEMA_VERSION};
use crate::scenario::{make_scenario, shuffle_ordering, ScenarioSpec, TaskSequence};
use crate::{seed, Error, Result};

/// Everything a learner sees for one trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub phase: Phase,
    pub r: Option<usize>,
    pub s: usize,
    pub assignment: &'a HyperparameterAssignment,
    pub sequence: &'a TaskSequence,
    pub trial_seed: u64,
}

/// Raw outcome of one full pass over a task sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub acc_series: Vec<f64>,
    pub param_counts: Vec<usize>,
    pub status: Status,
    pub inert: Vec<String>,
    pub timing: Timing,
}

/// Trains a continual learner over a task sequence. Implementations must be
/// deterministic given the context and must report divergence through the
/// outcome status rather than an error.
pub trait TrialRunner: Sync {
    fn algorithm(&self) -> String;

    fn init_scale(&self) -> f64;

    fn run_trial(&self, ctx: &TrialContext<'_>) -> Result<TrialOutcome>;
}

/// Runs one of the built-in learners in-process.
#[derive(Debug, Clone)]
pub struct NativeRunner {
    pub algorithm: AlgorithmId,
    pub settings: LearnerSettings,
}

impl TrialRunner for NativeRunner {
    fn algorithm(&self) -> String {
        self.algorithm.to_string()
    }

    fn init_scale(&self) -> f64 {
        self.settings.init.init_scale
    }

    fn run_trial(&self, ctx: &TrialContext<'_>) -> Result<TrialOutcome> {
        let (hp, inert) = LearnerHyperparams::from_assignment(self.algorithm, ctx.assignment)?;
        let seq = ctx.sequence;
        let dim = seq
            .tasks
            .first()
            .map(|t| t.train.dim())
            .ok_or_else(|| Error::contract("empty task sequence"))?;
        let mut learner = LearnerState::new(self.algorithm, &self.settings, dim, ctx.trial_seed)?;
        let mut out = TrialOutcome {
            acc_series: Vec::new(),
            param_counts: Vec::new(),
            status: Status::Healthy,
            inert,
            timing: Timing::default(),
        };
        let mut elapsed = 0.0;
        for (t, task) in seq.tasks.iter().enumerate() {
            let log = learner.train_task(t, task, &hp)?;
            elapsed += log.training_seconds + log.post_training_seconds;
            if log.diverged {
                break;
            }
            let vals: Vec<&LabeledDataset> = seq.tasks[..=t].iter().map(|k| &k.val).collect();
            out.acc_series.push(learner.evaluate_upto(&vals)?);
            out.param_counts.push(learner.param_count());
            out.timing.cumulative_seconds.push(elapsed);
            out.timing.post_training_seconds.push(log.post_training_seconds);
        }
        out.status = learner.status().clone();
        Ok(out)
    }
}

/// Shape of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSettings {
    pub scenario: ScenarioSpec,
    /// Number of sampled assignments `R`.
    pub samples: usize,
    /// Trials per assignment `S`.
    pub trials: usize,
    pub base_seed: u64,
    /// Maximum number of trials run concurrently.
    pub jobs: usize,
}

impl ProtocolSettings {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.samples == 0 || self.trials == 0 {
            return Err(Error::config("R and S must both be >= 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be >= 1"));
        }
        Ok(())
    }
}

/// One (assignment, trial) cell with all of its seeds resolved.
#[derive(Debug, Clone)]
pub struct Cell {
    pub phase: Phase,
    pub r: Option<usize>,
    pub s: usize,
    pub assignment: HyperparameterAssignment,
    pub ordering_seed: u64,
    pub scenario_seed: u64,
    pub trial_seed: u64,
}

/// Cells of the tuning grid, in (r, s) order.
pub fn tuning_cells(space: &HyperparameterSpace, settings: &ProtocolSettings) -> Vec<Cell> {
    let base = settings.base_seed;
    let mut cells = Vec::with_capacity(settings.samples * settings.trials);
    for r in 0..settings.samples {
        let assignment = sample_assignment(space, r, base);
        for s in 0..settings.trials {
            let idx = [r as u64, s as u64];
            cells.push(Cell {
                phase: Phase::Tuning,
                r: Some(r),
                s,
                assignment: assignment.clone(),
                ordering_seed: seed::derive(base, "order", &idx),
                scenario_seed: seed::derive(base, "tuning-holdout", &idx),
                trial_seed: seed::derive(base, "tuning-trial", &idx),
            });
        }
    }
    cells
}

/// Cells of the evaluation phase.
pub fn evaluation_cells(best: &HyperparameterAssignment, settings: &ProtocolSettings) -> Vec<Cell> {
    let base = settings.base_seed;
    (0..settings.trials)
        .map(|s| Cell {
            phase: Phase::Evaluation,
            r: None,
            s,
            assignment: best.clone(),
            ordering_seed: seed::derive(base, "eval-order", &[s as u64]),
            scenario_seed: seed::derive(base, "eval-holdout", &[s as u64]),
            trial_seed: seed::derive(base, "eval-trial", &[s as u64]),
        })
        .collect()
}

/// Builds the scenario for a cell and runs it.
pub fn run_cell(runner: &dyn TrialRunner, data: &LabeledDataset, spec: &ScenarioSpec, cell: &Cell) -> Result<RunRecord> {
    let ordering = shuffle_ordering(data.class_set(), cell.ordering_seed)?;
    let sequence = make_scenario(data, spec, &ordering, cell.scenario_seed)?;
    let ctx = TrialContext {
        phase: cell.phase,
        r: cell.r,
        s: cell.s,
        assignment: &cell.assignment,
        sequence: &sequence,
        trial_seed: cell.trial_seed,
    };
    let outcome = runner.run_trial(&ctx)?;
    let metrics = if outcome.status.is_diverged() {
        MetricPair::ZERO
    } else {
        if outcome.acc_series.len() != sequence.len() {
            return Err(Error::contract(format!(
                "healthy trial reported {} accuracies for {} tasks",
                outcome.acc_series.len(),
                sequence.len()
            )));
        }
        TaskAccuracySeries::new(outcome.acc_series.clone())?.metric_pair()?
    };
    log::debug!(
        "{} {:?} r={:?} s={} acc={:.4} avg_acc={:.4}{}",
        runner.algorithm(),
        cell.phase,
        cell.r,
        cell.s,
        metrics.acc,
        metrics.avg_acc,
        if outcome.status.is_diverged() { " (diverged)" } else { "" }
    );
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        algorithm: runner.algorithm(),
        phase: cell.phase,
        r: cell.r,
        s: cell.s,
        assignment: cell.assignment.clone(),
        ordering_seed: cell.ordering_seed,
        trial_seed: cell.trial_seed,
        ordering,
        acc_series: outcome.acc_series,
        metrics,
        status: outcome.status,
        param_counts: outcome.param_counts,
        inert: outcome.inert,
        init_scale: runner.init_scale(),
        timing: outcome.timing,
    })
}

/// Runs `cells` on up to `jobs` threads. The result is in canonical order
/// whatever the scheduling; the first failing cell (in that order) aborts.
pub fn run_cells(
    runner: &dyn TrialRunner,
    data: &LabeledDataset,
    spec: &ScenarioSpec,
    cells: &[Cell],
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(runner, data, spec, c)).collect());
    let mut records = results.into_iter().collect::<Result<Vec<_>>>()?;
    canonical_sort(&mut records);
    Ok(records)
}

/// `(H_r, P_r)` with `P_r` the S-trial mean of Acc and of AvgAcc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub r: usize,
    pub assignment: HyperparameterAssignment,
    pub metrics: MetricPair,
    pub harmonic: f64,
    pub trials: usize,
    pub diverged_trials: usize,
}

pub fn tuning_phase(
    runner: &dyn TrialRunner,
    data: &LabeledDataset,
    space: &HyperparameterSpace,
    settings: &ProtocolSettings,
) -> Result<Vec<RunRecord>> {
    settings.validate()?;
    run_cells(runner, data, &settings.scenario, &tuning_cells(space, settings), settings.jobs)
}

/// Groups tuning records by `r` and averages each group in `s` order.
pub fn aggregate_tuning(records: &[RunRecord]) -> Result<Vec<TuningRow>> {
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for rec in records {
        if rec.phase != Phase::Tuning {
            continue;
        }
        let r = rec.r.ok_or_else(|| Error::format("tuning record without an r index"))?;
        groups.entry(r).or_default().push(rec);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (r, mut group) in groups {
        group.sort_by_key(|g| g.s);
        let first = group[0];
        if group.iter().any(|g| g.assignment != first.assignment || g.algorithm != first.algorithm) {
            return Err(Error::format(format!("records for r={r} disagree on algorithm or assignment")));
        }
        let n = group.len() as f64;
        let metrics = MetricPair {
            acc: group.iter().map(|g| g.metrics.acc).sum::<f64>() / n,
            avg_acc: group.iter().map(|g| g.metrics.avg_acc).sum::<f64>() / n,
        };
        rows.push(TuningRow {
            r,
            assignment: first.assignment.clone(),
            metrics,
            harmonic: metrics.harmonic(),
            trials: group.len(),
            diverged_trials: group.iter().filter(|g| g.diverged()).count(),
        });
    }
    if rows.is_empty() {
        return Err(Error::contract("no tuning records to aggregate"));
    }
    Ok(rows)
}

/// Index into `rows` of `H*`.
pub fn select_best_row(rows: &[TuningRow]) -> Result<usize> {
    let pairs: Vec<MetricPair> = rows.iter().map(|r| r.metrics).collect();
    select_best_index(&pairs)
}

/// Evaluation-phase score: S-trial means with sample standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub metrics: MetricPair,
    pub sd: MetricPair,
    pub trials: usize,
    pub diverged_trials: usize,
}

pub fn summarize_evaluation(records: &[RunRecord]) -> Result<EvaluationSummary> {
    let mut recs: Vec<&RunRecord> = records.iter().filter(|r| r.phase == Phase::Evaluation).collect();
    recs.sort_by_key(|r| r.s);
    let accs: Vec<f64> = recs.iter().map(|r| r.metrics.acc).collect();
    let avgs: Vec<f64> = recs.iter().map(|r| r.metrics.avg_acc).collect();
    let (acc, acc_sd) = mean_and_sd(&accs)?;
    let (avg_acc, avg_sd) = mean_and_sd(&avgs)?;
    Ok(EvaluationSummary {
        metrics: MetricPair { acc, avg_acc },
        sd: MetricPair {
            acc: acc_sd,
            avg_acc: avg_sd,
        },
        trials: recs.len(),
        diverged_trials: recs.iter().filter(|r| r.diverged()).count(),
    })
}

pub fn evaluation_phase(
    runner: &dyn TrialRunner,
    data: &LabeledDataset,
    best: &HyperparameterAssignment,
    settings: &ProtocolSettings,
) -> Result<(EvaluationSummary, Vec<RunRecord>)> {
    settings.validate()?;
    let records = run_cells(runner, data, &settings.scenario, &evaluation_cells(best, settings), settings.jobs)?;
    Ok((summarize_evaluation(&records)?, records))
}

/// Result of the whole protocol for one algorithm under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseReport {
    pub schema_version: u32,
    pub algorithm: String,
    /// Free-form label of the data condition, used as a results-table column.
    pub condition: String,
    pub scenario: ScenarioSpec,
    pub samples: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub init_scale: f64,
    pub tuning: Vec<TuningRow>,
    /// `r` of the selected assignment.
    pub best_r: usize,
    pub best: HyperparameterAssignment,
    pub evaluation: EvaluationSummary,
}

impl PhaseReport {
    /// A report counts as diverged when any evaluation trial diverged.
    pub fn diverged(&self) -> bool {
        self.evaluation.diverged_trials > 0
    }

    /// Rebuilds a report purely from persisted records.
    pub fn from_records(
        records: &[RunRecord],
        condition: &str,
        settings: &ProtocolSettings,
    ) -> Result<PhaseReport> {
        let tuning = aggregate_tuning(records)?;
        let best_row = &tuning[select_best_row(&tuning)?];
        let evaluation = summarize_evaluation(records)?;
        let first = &records[0];
        Ok(PhaseReport {
            schema_version: SCHEMA_VERSION,
            algorithm: first.algorithm.clone(),
            condition: condition.to_string(),
            scenario: settings.scenario,
            samples: settings.samples,
            trials: settings.trials,
            base_seed: settings.base_seed,
            init_scale: first.init_scale,
            best_r: best_row.r,
            best: best_row.assignment.clone(),
            tuning,
            evaluation,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<PhaseReport> {
        let report: PhaseReport = serde_json::from_str(text).map_err(|e| Error::format(format!("report: {e}")))?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::format(format!(
                "report schema version {}, expected {SCHEMA_VERSION}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<PhaseReport> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Tuning on `split.tuning`, selection, then evaluation on
/// `split.evaluation`. Returns the report and every trial record.
pub fn run_protocol(
    runner: &dyn TrialRunner,
    split: &SplitPair,
    space: &HyperparameterSpace,
    settings: &ProtocolSettings,
    condition: &str,
) -> Result<(PhaseReport, Vec<RunRecord>)> {
    let mut records = tuning_phase(runner, &split.tuning, space, settings)?;
    let rows = aggregate_tuning(&records)?;
    let best = rows[select_best_row(&rows)?].assignment.clone();
    log::info!("{}: selected {}", runner.algorithm(), best.describe());
    let (_, eval) = evaluation_phase(runner, &split.evaluation, &best, settings)?;
    records.extend(eval);
    canonical_sort(&mut records);
    let report = PhaseReport::from_records(&records, condition, settings)?;
    Ok((report, records))
}
