//! Client side of the external-trainer wire protocol.
//!
//! The harness spawns one adapter process per trial and exchanges
//! newline-delimited JSON over its stdin/stdout. Each request
//! `{"id", "cmd", "payload"}` is answered by exactly one response
//! `{"id", "ok", "payload", "error"}` with the same id. A trial issues
//! `hello`, `init`, then for every task `train_task`, `eval_upto` and
//! `param_count`, and finally `shutdown`.
//!
//! Crashes, timeouts, malformed replies and non-finite accuracies end the
//! trial as diverged with a diagnostic; they never abort the protocol run.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::LabeledDataset;
use crate::learners::Status;
use crate::metrics::accuracy;
use crate::protocol::{TrialContext, TrialOutcome, TrialRunner};
use crate::records::Timing;
use crate::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmd {
    Hello,
    Init,
    TrainTask,
    EvalUpto,
    ParamCount,
    Shutdown,
}

impl Cmd {
    pub fn as_str(self) -> &'static str {
        match self {
            Cmd::Hello => "hello",
            Cmd::Init => "init",
            Cmd::TrainTask => "train_task",
            Cmd::EvalUpto => "eval_upto",
            Cmd::ParamCount => "param_count",
            Cmd::Shutdown => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub cmd: Cmd,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub ok: bool,
    #[serde(default)]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn success(id: u64, payload: Value) -> Self {
        Self {
            id,
            ok: true,
            payload,
            error: None,
        }
    }

    pub fn failure(id: u64, error: impl Into<String>) -> Self {
        Self {
            id,
            ok: false,
            payload: Value::Null,
            error: Some(error.into()),
        }
    }
}

/// Inline `{"features": [[..]], "labels": [..]}` payload fragment.
pub fn dataset_payload(data: &LabeledDataset) -> Value {
    let rows: Vec<Vec<f64>> = data.features().outer_iter().map(|r| r.to_vec()).collect();
    json!({ "features": rows, "labels": data.labels() })
}

fn default_timeout() -> f64 {
    600.0
}

/// How to launch an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Algorithm name used in records and tables.
    pub name: String,
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Per-request timeout.
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
}

impl ExternalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.command.is_empty() {
            return Err(Error::config("external trainer needs a name and a command"));
        }
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(Error::config("external trainer timeout must be > 0"));
        }
        Ok(())
    }
}

/// One live adapter process.
pub struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    next_id: u64,
    timeout: Duration,
}

impl Session {
    pub fn start(spec: &ExternalSpec) -> Result<Session> {
        spec.validate()?;
        let mut child = Command::new(&spec.command[0])
            .args(&spec.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::config(format!("cannot start '{}': {e}", spec.command[0])))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Session {
            child,
            stdin,
            lines: rx,
            next_id: 1,
            timeout: Duration::from_secs_f64(spec.timeout_seconds),
        })
    }

    /// Sends one request and waits for its response payload.
    pub fn call(&mut self, cmd: Cmd, payload: Value) -> Result<Value> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, cmd, payload })?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Bridge("adapter input already closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush())
            .map_err(|e| Error::Bridge(format!("writing {}: {e}", cmd.as_str())))?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let reply = match self.lines.recv_timeout(left) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Bridge(format!(
                        "no reply to {} within {:.1}s",
                        cmd.as_str(),
                        self.timeout.as_secs_f64()
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
                    return Err(Error::Bridge(format!(
                        "adapter exited during {} ({status})",
                        cmd.as_str()
                    )));
                }
            };
            if reply.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&reply)
                .map_err(|e| Error::Bridge(format!("malformed reply to {}: {e}", cmd.as_str())))?;
            if resp.id != id {
                return Err(Error::Bridge(format!(
                    "reply id {} does not match request id {id}",
                    resp.id
                )));
            }
            if !resp.ok {
                return Err(Error::Bridge(format!(
                    "{} failed: {}",
                    cmd.as_str(),
                    resp.error.unwrap_or_else(|| "no error message".into())
                )));
            }
            return Ok(resp.payload);
        }
    }

    /// Polite shutdown; the process is killed if it lingers.
    pub fn shutdown(mut self) -> Result<()> {
        let res = self.call(Cmd::Shutdown, json!({}));
        self.stdin.take();
        res.map(|_| ())
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn field<'a>(payload: &'a Value, name: &str, cmd: Cmd) -> Result<&'a Value> {
    payload
        .get(name)
        .ok_or_else(|| Error::Bridge(format!("reply to {} lacks '{name}'", cmd.as_str())))
}

/// Drives an external adapter through a whole task sequence.
#[derive(Debug, Clone)]
pub struct ExternalRunner {
    pub spec: ExternalSpec,
    pub init_scale: f64,
}

impl ExternalRunner {
    pub fn new(spec: ExternalSpec, init_scale: f64) -> Self {
        Self { spec, init_scale }
    }

    fn drive(&self, ctx: &TrialContext<'_>, out: &mut TrialOutcome, current: &mut usize) -> Result<()> {
        let seq = ctx.sequence;
        let mut session = Session::start(&self.spec)?;
        let hello = session.call(Cmd::Hello, json!({ "protocol_version": PROTOCOL_VERSION }))?;
        let version = field(&hello, "protocol_version", Cmd::Hello)?.as_u64();
        if version != Some(u64::from(PROTOCOL_VERSION)) {
            return Err(Error::Bridge(format!(
                "adapter speaks protocol {version:?}, harness speaks {PROTOCOL_VERSION}"
            )));
        }
        let dim = seq.tasks.first().map_or(0, |t| t.train.dim());
        session.call(
            Cmd::Init,
            json!({
                "algorithm": self.spec.name,
                "hyperparameters": ctx.assignment.values,
                "trial_seed": ctx.trial_seed,
                "input_dim": dim,
                "num_tasks": seq.len(),
                "init_scale": self.init_scale,
            }),
        )?;
        let mut elapsed = 0.0;
        for (t, task) in seq.tasks.iter().enumerate() {
            *current = t;
            let started = Instant::now();
            let mut payload = dataset_payload(&task.train);
            payload["task_index"] = json!(t);
            payload["class_ids"] = json!(task.class_ids);
            let reply = session.call(Cmd::TrainTask, payload)?;
            elapsed += started.elapsed().as_secs_f64();
            let post = reply.get("post_training_seconds").and_then(Value::as_f64).unwrap_or(0.0);

            let vals: Vec<&LabeledDataset> = seq.tasks[..=t].iter().map(|k| &k.val).collect();
            let val = LabeledDataset::concat("eval", &vals)?;
            let mut payload = dataset_payload(&val);
            payload["t"] = json!(t + 1);
            let reply = session.call(Cmd::EvalUpto, payload)?;
            let acc = if let Some(pred) = reply.get("predictions") {
                let pred: Vec<u32> = serde_json::from_value(pred.clone())
                    .map_err(|e| Error::Bridge(format!("bad predictions: {e}")))?;
                accuracy(&pred, val.labels()).map_err(|e| Error::Bridge(e.to_string()))?
            } else {
                match field(&reply, "accuracy", Cmd::EvalUpto)?.as_f64() {
                    Some(a) if a.is_finite() && (0.0..=1.0).contains(&a) => a,
                    _ => {
                        return Err(Error::Diverged(format!(
                            "adapter reported accuracy {} after task {}",
                            reply["accuracy"],
                            t + 1
                        )))
                    }
                }
            };
            let reply = session.call(Cmd::ParamCount, json!({}))?;
            let count = field(&reply, "count", Cmd::ParamCount)?
                .as_u64()
                .ok_or_else(|| Error::Bridge("param_count is not a non-negative integer".into()))?;

            out.acc_series.push(acc);
            out.param_counts.push(count as usize);
            out.timing.cumulative_seconds.push(elapsed);
            out.timing.post_training_seconds.push(post);
        }
        if let Err(e) = session.shutdown() {
            log::warn!("{}: shutdown after a complete run failed: {e}", self.spec.name);
        }
        Ok(())
    }
}

impl TrialRunner for ExternalRunner {
    fn algorithm(&self) -> String {
        self.spec.name.clone()
    }

    fn init_scale(&self) -> f64 {
        self.init_scale
    }

    fn run_trial(&self, ctx: &TrialContext<'_>) -> Result<TrialOutcome> {
        let mut out = TrialOutcome {
            acc_series: Vec::new(),
            param_counts: Vec::new(),
            status: Status::Healthy,
            inert: Vec::new(),
            timing: Timing::default(),
        };
        let mut current = 0;
        match self.drive(ctx, &mut out, &mut current) {
            Ok(()) => {}
            Err(Error::Bridge(reason) | Error::Diverged(reason)) => {
                log::warn!("{} trial diverged at task {current}: {reason}", self.spec.name);
                out.status = Status::Diverged {
                    task_index: current,
                    reason,
                };
            }
            Err(e) => return Err(e),
        }
        Ok(out)
    }
}
