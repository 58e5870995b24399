//! Persisted outcome of single trials, one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::learners::Status;
use crate::metrics::MetricPair;
use crate::protocol::HyperparameterAssignment;
use crate::{Error, Result};

/// Version of the record and report layout. Bumped on any incompatible
/// change; readers reject other versions.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Tuning,
    Evaluation,
}

/// Wall-clock accounting. Excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    /// Cumulative seconds after each trained task, post-training included.
    pub cumulative_seconds: Vec<f64>,
    /// Post-training seconds (bias fitting) of each task.
    pub post_training_seconds: Vec<f64>,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.cumulative_seconds.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub algorithm: String,
    pub phase: Phase,
    /// Assignment index; absent in the evaluation phase.
    pub r: Option<usize>,
    pub s: usize,
    pub assignment: HyperparameterAssignment,
    pub ordering_seed: u64,
    pub trial_seed: u64,
    pub ordering: Vec<u32>,
    /// `Acc_t` for every task trained before any divergence.
    pub acc_series: Vec<f64>,
    /// `(0, 0)` when the trial diverged.
    pub metrics: MetricPair,
    pub status: Status,
    pub param_counts: Vec<usize>,
    /// Assignment entries the algorithm ignored.
    pub inert: Vec<String>,
    pub init_scale: f64,
    pub timing: Timing,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.status.is_diverged()
    }

    /// Copy with the timing block cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    fn sort_key(&self) -> (Phase, &str, Option<usize>, usize) {
        (self.phase, &self.algorithm, self.r, self.s)
    }
}

/// Canonical order: phase, algorithm, r, s.
pub fn canonical_sort(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

pub fn to_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records(records: &[RunRecord], path: &Path) -> Result<()> {
    to_jsonl(records, BufWriter::new(File::create(path)?))
}

/// Appends one record. Callers funnel all writers through a single sink.
pub fn append_record(record: &RunRecord, path: &Path) -> Result<()> {
    let f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    to_jsonl(std::slice::from_ref(record), BufWriter::new(f))
}

/// Parses JSONL records. Blank lines are skipped. Output keeps file order.
pub fn from_jsonl<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::format(format!("line {n}: {e}")))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(Error::format(format!(
                    "line {n}: schema version {v}, expected {SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::format(format!("line {n}: missing schema_version"))),
        }
        let rec: RunRecord =
            serde_json::from_value(value).map_err(|e| Error::format(format!("line {n}: {e}")))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    from_jsonl(BufReader::new(File::open(path)?))
}
