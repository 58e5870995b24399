//! Results tables and plot data. Every number here is recomputed from
//! reports or records; nothing is stored only in the output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::learners::AlgorithmId;
use crate::metrics::{mean_and_sd, MetricPair};
use crate::protocol::PhaseReport;
use crate::records::RunRecord;
use crate::{Error, Result};

/// Percentage with two decimals.
pub fn percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// `"Acc / AvgAcc"` in percent, or `"- / -"` for a diverged result.
pub fn format_cell(metrics: &MetricPair, diverged: bool) -> String {
    if diverged {
        "- / -".to_string()
    } else {
        format!("{} / {}", percent(metrics.acc), percent(metrics.avg_acc))
    }
}

/// Built-in algorithms first in roster order, then any others by name.
fn algorithm_rank(name: &str) -> (usize, &str) {
    let pos = AlgorithmId::ALL.iter().position(|a| a.as_str() == name);
    (pos.unwrap_or(AlgorithmId::ALL.len()), name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub conditions: Vec<String>,
    /// `(algorithm, one cell per condition)`; empty string when absent.
    pub rows: Vec<(String, Vec<String>)>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["algorithm".to_string()];
        header.extend(self.conditions.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (algo, cells) in &self.rows {
            let mut row = vec![algo.clone()];
            row.extend(cells.iter().cloned());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Space-padded columns, header underlined.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Algorithm".to_string()];
        header.extend(self.conditions.iter().cloned());
        let mut lines: Vec<Vec<String>> = vec![header];
        for (algo, cells) in &self.rows {
            let mut row = vec![algo.clone()];
            row.extend(cells.iter().cloned());
            lines.push(row);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("  "));
                out.push('\n');
            }
        }
        out
    }
}

/// One row per algorithm, one column per condition. Reports in the same
/// condition must share the scenario, and all reports must share `S`.
pub fn emit_results_table(reports: &[PhaseReport]) -> Result<ResultsTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::contract("results table needs at least one report"))?;
    let mut scenario_of: BTreeMap<&str, &PhaseReport> = BTreeMap::new();
    let mut cells: BTreeMap<(usize, &str), BTreeMap<&str, String>> = BTreeMap::new();
    for rep in reports {
        if rep.trials != first.trials {
            return Err(Error::contract(format!(
                "reports disagree on S ({} vs {})",
                first.trials, rep.trials
            )));
        }
        let prev = scenario_of.entry(&rep.condition).or_insert(rep);
        if prev.scenario != rep.scenario {
            return Err(Error::contract(format!(
                "condition '{}' has reports with different scenarios",
                rep.condition
            )));
        }
        let row = cells.entry(algorithm_rank(&rep.algorithm)).or_default();
        let cell = format_cell(&rep.evaluation.metrics, rep.diverged());
        if row.insert(&rep.condition, cell).is_some() {
            return Err(Error::contract(format!(
                "two reports for {} under condition '{}'",
                rep.algorithm, rep.condition
            )));
        }
    }
    let conditions: Vec<String> = scenario_of.keys().map(|c| c.to_string()).collect();
    let rows = cells
        .into_iter()
        .map(|((_, algo), by_cond)| {
            let row = conditions
                .iter()
                .map(|c| by_cond.get(c.as_str()).cloned().unwrap_or_default())
                .collect();
            (algo.to_string(), row)
        })
        .collect();
    Ok(ResultsTable { conditions, rows })
}

/// Long-format series: per algorithm and task, the mean and sample standard
/// deviation over the records that reached that task.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub algorithm: String,
    pub metric: &'static str,
    /// 1-based task index.
    pub t: usize,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

fn series_points<F>(records: &[RunRecord], metric: &'static str, values: F) -> Result<Vec<CurvePoint>>
where
    F: Fn(&RunRecord) -> Vec<f64>,
{
    let mut by: BTreeMap<((usize, &str), usize), Vec<f64>> = BTreeMap::new();
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.phase, r.r, r.s));
    for rec in sorted {
        for (t, v) in values(rec).into_iter().enumerate() {
            by.entry((algorithm_rank(&rec.algorithm), t + 1)).or_default().push(v);
        }
    }
    by.into_iter()
        .map(|(((_, algo), t), vals)| {
            let (mean, sd) = mean_and_sd(&vals)?;
            Ok(CurvePoint {
                algorithm: algo.to_string(),
                metric,
                t,
                mean,
                sd,
                n: vals.len(),
            })
        })
        .collect()
}

fn points_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("algorithm,metric,t,mean,sd,n\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{},{}", p.algorithm, p.metric, p.t, p.mean, p.sd, p.n);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    /// `acc` (fraction) and `param_count` series.
    pub points: Vec<CurvePoint>,
    /// Cumulative training seconds; kept apart because it is not
    /// reproducible.
    pub timing: Vec<CurvePoint>,
}

impl Curves {
    pub fn to_csv(&self) -> String {
        points_csv(&self.points)
    }

    pub fn timing_csv(&self) -> String {
        points_csv(&self.timing)
    }
}

pub fn emit_curves(records: &[RunRecord]) -> Result<Curves> {
    if records.is_empty() {
        return Err(Error::contract("curves need at least one record"));
    }
    let mut points = series_points(records, "acc", |r| r.acc_series.clone())?;
    points.extend(series_points(records, "param_count", |r| {
        r.param_counts.iter().map(|&c| c as f64).collect()
    })?);
    points.sort_by(|a, b| {
        (algorithm_rank(&a.algorithm), a.metric, a.t).cmp(&(algorithm_rank(&b.algorithm), b.metric, b.t))
    });
    let timing = series_points(records, "cumulative_seconds", |r| r.timing.cumulative_seconds.clone())?;
    Ok(Curves { points, timing })
}

/// Algorithms present in `records`, in table order.
pub fn algorithms_in(records: &[RunRecord]) -> Vec<String> {
    let set: BTreeSet<(usize, &str)> = records.iter().map(|r| algorithm_rank(&r.algorithm)).collect();
    set.into_iter().map(|(_, a)| a.to_string()).collect()
}
