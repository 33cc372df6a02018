//! External black box speaking line-delimited JSON over stdin/stdout.
//!
//! Request, one line per batch: `{"instances": [[v, ...], ...]}` with numeric
//! features as numbers and categorical features as category names.
//! Response, one line: `{"predictions": [p, ...]}` with class names (or
//! numbers for regression). The child stays alive across batches; one batch
//! is in flight at a time.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Instance, Label, Schema};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Serialize)]
struct Request<'a> {
    instances: &'a [serde_json::Value],
}

#[derive(Deserialize)]
struct Response {
    predictions: Vec<serde_json::Value>,
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn shutdown(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct SubprocessOracle {
    command: String,
    schema: Schema,
    timeout: Duration,
    state: Mutex<Option<Running>>,
}

impl std::fmt::Debug for SubprocessOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessOracle")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl SubprocessOracle {
    /// Start `command` through `sh -c`.
    pub fn spawn(command: &str, schema: &Schema, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start '{command}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_string(),
            schema: schema.clone(),
            timeout,
            state: Mutex::new(Some(Running {
                child,
                stdin,
                lines: rx,
            })),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn predict_batch(&self, rows: &[Instance]) -> Result<Vec<Label>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut guard = self.state.lock().unwrap_or_else(|p| p.into_inner());
        let Some(running) = guard.as_mut() else {
            return Err(Error::Oracle(format!(
                "subprocess '{}' is no longer running",
                self.command
            )));
        };
        match self.exchange(running, rows) {
            Ok(labels) => Ok(labels),
            Err(e) => {
                // A child that failed once is not trusted with later batches.
                running.shutdown();
                *guard = None;
                Err(e)
            }
        }
    }

    fn exchange(&self, running: &mut Running, rows: &[Instance]) -> Result<Vec<Label>> {
        let instances: Vec<serde_json::Value> =
            rows.iter().map(|r| self.schema.instance_to_json(r)).collect();
        let mut line = serde_json::to_vec(&Request {
            instances: &instances,
        })?;
        line.push(b'\n');
        running
            .stdin
            .write_all(&line)
            .and_then(|_| running.stdin.flush())
            .map_err(|e| self.failure(running, &format!("write failed: {e}")))?;

        let reply = match running.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.failure(running, &format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Oracle(format!(
                    "subprocess '{}' timed out after {:?}",
                    self.command, self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(self.failure(running, "closed its output"))
            }
        };
        let response: Response = serde_json::from_str(&reply).map_err(|e| {
            Error::Oracle(format!("malformed response from '{}': {e}", self.command))
        })?;
        if response.predictions.len() != rows.len() {
            return Err(Error::Oracle(format!(
                "subprocess '{}' returned {} predictions for {} instances",
                self.command,
                response.predictions.len(),
                rows.len()
            )));
        }
        response
            .predictions
            .iter()
            .map(|p| {
                self.schema
                    .label_from_json(p)
                    .map_err(|e| Error::Oracle(format!("bad prediction {p}: {e}")))
            })
            .collect()
    }

    fn failure(&self, running: &mut Running, what: &str) -> Error {
        let status = running
            .child
            .try_wait()
            .ok()
            .flatten()
            .map(|s| format!(" ({s})"))
            .unwrap_or_default();
        Error::Oracle(format!("subprocess '{}' {what}{status}", self.command))
    }
}

impl Drop for SubprocessOracle {
    fn drop(&mut self) {
        let state = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(running) = state.as_mut() {
            running.shutdown();
        }
    }
}
