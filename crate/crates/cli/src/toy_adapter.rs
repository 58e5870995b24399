//! Minimal external trainer speaking the clproto wire protocol on
//! stdin/stdout: a nearest-class-mean classifier over every example seen.
//!
//! The failure flags exist so tests can exercise the harness's handling of
//! crashing, hanging and misbehaving adapters.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::time::Duration;

use clap::Parser;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "clproto-toy-adapter")]
struct Flags {
    /// Exit abruptly when asked to train this task (0-based).
    #[arg(long)]
    crash_at_task: Option<usize>,
    /// Stop answering when asked to train this task.
    #[arg(long)]
    hang_at_task: Option<usize>,
    /// Report a NaN accuracy after this task.
    #[arg(long)]
    nan_at_task: Option<usize>,
    /// Protocol version announced in the hello reply.
    #[arg(long, default_value_t = 1)]
    protocol_version: u64,
}

#[derive(Default)]
struct Centroids {
    dim: usize,
    /// class -> (sum of features, count)
    sums: BTreeMap<u64, (Vec<f64>, usize)>,
}

impl Centroids {
    fn add(&mut self, features: &[Vec<f64>], labels: &[u64]) {
        for (x, &y) in features.iter().zip(labels) {
            let entry = self.sums.entry(y).or_insert_with(|| (vec![0.0; x.len()], 0));
            for (s, v) in entry.0.iter_mut().zip(x) {
                *s += v;
            }
            entry.1 += 1;
        }
    }

    fn predict(&self, x: &[f64]) -> u64 {
        let mut best = (f64::INFINITY, 0);
        for (&c, (sum, n)) in &self.sums {
            let d: f64 = sum.iter().zip(x).map(|(s, v)| (s / *n as f64 - v).powi(2)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }
}

fn parse_data(payload: &Value) -> Result<(Vec<Vec<f64>>, Vec<u64>), String> {
    let features: Vec<Vec<f64>> =
        serde_json::from_value(payload["features"].clone()).map_err(|e| format!("features: {e}"))?;
    let labels: Vec<u64> = serde_json::from_value(payload["labels"].clone()).map_err(|e| format!("labels: {e}"))?;
    if features.len() != labels.len() {
        return Err("features and labels differ in length".into());
    }
    Ok((features, labels))
}

fn main() {
    let flags = Flags::parse();
    let mut model = Centroids::default();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(out, "{}", json!({"id": 0, "ok": false, "error": format!("bad request: {e}")}));
                let _ = out.flush();
                continue;
            }
        };
        let id = req["id"].as_u64().unwrap_or(0);
        let payload = &req["payload"];
        let reply: Result<Value, String> = match req["cmd"].as_str().unwrap_or("") {
            "hello" => Ok(json!({"protocol_version": flags.protocol_version, "name": "toy-ncm"})),
            "init" => {
                model = Centroids {
                    dim: payload["input_dim"].as_u64().unwrap_or(0) as usize,
                    ..Default::default()
                };
                Ok(json!({}))
            }
            "train_task" => {
                let t = payload["task_index"].as_u64().unwrap_or(0) as usize;
                if flags.crash_at_task == Some(t) {
                    std::process::exit(3);
                }
                if flags.hang_at_task == Some(t) {
                    loop {
                        std::thread::sleep(Duration::from_secs(3600));
                    }
                }
                parse_data(payload).map(|(x, y)| {
                    model.add(&x, &y);
                    json!({"post_training_seconds": 0.0})
                })
            }
            "eval_upto" => {
                let t = payload["t"].as_u64().unwrap_or(1) as usize;
                if flags.nan_at_task == Some(t - 1) {
                    // what a Python json.dumps(float("nan")) would send
                    let _ = writeln!(out, "{{\"id\":{id},\"ok\":true,\"payload\":{{\"accuracy\":NaN}}}}");
                    let _ = out.flush();
                    continue;
                }
                parse_data(payload).map(|(x, y)| {
                    let hits = x.iter().zip(&y).filter(|(row, &l)| model.predict(row) == l).count();
                    json!({"accuracy": hits as f64 / y.len().max(1) as f64})
                })
            }
            "param_count" => Ok(json!({"count": model.sums.len() * model.dim})),
            "shutdown" => {
                let _ = writeln!(out, "{}", json!({"id": id, "ok": true, "payload": {}}));
                let _ = out.flush();
                break;
            }
            other => Err(format!("unknown cmd '{other}'")),
        };
        let resp = match reply {
            Ok(p) => json!({"id": id, "ok": true, "payload": p}),
            Err(e) => json!({"id": id, "ok": false, "error": e}),
        };
        if writeln!(out, "{resp}").and_then(|()| out.flush()).is_err() {
            break;
        }
    }
}
