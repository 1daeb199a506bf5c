//! Smoke-test execution of generated repositories.
//!
//! The report format is shared with the external shim, so field names here
//! are part of the wire contract.

mod host;
mod stub;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::repo::Repository;

pub use host::HostSandbox;
pub use stub::{check_syntax, StubSandbox, StubTrainer, DEFAULT_LEARNING_RATE};

/// Iterations of the smoke training pass.
pub const DEFAULT_SMOKE_ITERS: u64 = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeError {
    pub stage: String,
    pub file: Option<String>,
    pub traceback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeReport {
    pub imports_resolve: bool,
    pub registered: bool,
    pub train_started: bool,
    pub steps_completed: u64,
    pub nan_detected: bool,
    pub loss_first: Option<f64>,
    pub loss_last: Option<f64>,
    pub psnr_eval: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<SmokeError>,
}

const FIELDS: &[&str] = &[
    "imports_resolve",
    "registered",
    "train_started",
    "steps_completed",
    "nan_detected",
    "loss_first",
    "loss_last",
    "psnr_eval",
    "wall_time_s",
    "error",
];

impl Default for SmokeReport {
    fn default() -> Self {
        SmokeReport {
            imports_resolve: false,
            registered: false,
            train_started: false,
            steps_completed: 0,
            nan_detected: false,
            loss_first: None,
            loss_last: None,
            psnr_eval: None,
            wall_time_s: 0.0,
            error: None,
        }
    }
}

impl SmokeReport {
    pub fn failed(stage: &str, file: Option<&str>, traceback: impl Into<String>) -> Self {
        SmokeReport {
            error: Some(SmokeError {
                stage: stage.to_string(),
                file: file.map(str::to_string),
                traceback: traceback.into(),
            }),
            ..Default::default()
        }
    }

    /// Training ran at least one step.
    pub fn is_trainable(&self) -> bool {
        self.train_started && self.steps_completed > 0
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if self.steps_completed > 0 && !self.train_started {
            return Err("steps_completed > 0 without train_started".into());
        }
        if self.registered && !self.imports_resolve {
            return Err("registered without imports_resolve".into());
        }
        if self.train_started && !self.registered {
            return Err("train_started without registered".into());
        }
        if !(self.wall_time_s >= 0.0) {
            return Err("wall_time_s must be a nonnegative number".into());
        }
        Ok(())
    }

    /// Parse a report, rejecting missing or unknown fields.
    pub fn from_json(text: &str) -> Result<Self, SandboxError> {
        let v: Value = serde_json::from_str(text).map_err(|e| SandboxError::InvalidReport(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| SandboxError::InvalidReport("report is not an object".into()))?;
        for f in FIELDS {
            if !obj.contains_key(*f) {
                return Err(SandboxError::InvalidReport(format!("missing field `{f}`")));
            }
        }
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(SandboxError::InvalidReport(format!("unknown field `{k}`")));
        }
        if let Some(err) = obj["error"].as_object() {
            for f in ["stage", "file", "traceback"] {
                if !err.contains_key(f) {
                    return Err(SandboxError::InvalidReport(format!("missing field `error.{f}`")));
                }
            }
        }
        let report: SmokeReport =
            serde_json::from_value(v).map_err(|e| SandboxError::InvalidReport(e.to_string()))?;
        report.check_invariants().map_err(SandboxError::InvalidReport)?;
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox crashed: {0}")]
    Crash(String),
    #[error("invalid smoke report: {0}")]
    InvalidReport(String),
    #[error("no scripted smoke report left")]
    Exhausted,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmokeRequest {
    pub iters: u64,
    pub eval: bool,
    /// Dataset directory; `None` selects the built-in stub scene.
    pub data: Option<PathBuf>,
}

impl Default for SmokeRequest {
    fn default() -> Self {
        SmokeRequest {
            iters: DEFAULT_SMOKE_ITERS,
            eval: true,
            data: None,
        }
    }
}

/// Runs a smoke pass over a repository. Failures of the repository's code
/// are reported inside the report; `Err` is reserved for the runner itself.
pub trait Sandbox: Send + Sync {
    fn run(&self, repo: &Repository, req: &SmokeRequest) -> Result<SmokeReport, SandboxError>;
}

/// Replays a fixed sequence of reports, ignoring the repository.
#[derive(Debug, Default)]
pub struct ScriptedSandbox {
    reports: Mutex<VecDeque<SmokeReport>>,
    runs: Mutex<usize>,
}

impl ScriptedSandbox {
    pub fn new(reports: impl IntoIterator<Item = SmokeReport>) -> Self {
        ScriptedSandbox {
            reports: Mutex::new(reports.into_iter().collect()),
            runs: Mutex::new(0),
        }
    }

    pub fn runs(&self) -> usize {
        *self.runs.lock().expect("poisoned")
    }
}

impl Sandbox for ScriptedSandbox {
    fn run(&self, _repo: &Repository, _req: &SmokeRequest) -> Result<SmokeReport, SandboxError> {
        *self.runs.lock().expect("poisoned") += 1;
        self.reports.lock().expect("poisoned").pop_front().ok_or(SandboxError::Exhausted)
    }
}
