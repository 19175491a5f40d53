//! Sandboxed execution of candidate solutions.
//!
//! Each execution runs `interpreter_command runner_shim <payload-file>` in a
//! fresh process group with a scrubbed environment and a private temporary
//! working directory. The shim prints a single JSON verdict as the last line
//! of stdout; the orchestrator measures wall time itself and kills the whole
//! process group on deadline.

mod exec;
mod feedback;
mod payload;
mod pool;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use exec::{execute_with_timeout, VerdictRecord, RUNNER_SHIM_SOURCE};
pub use feedback::{extract_feedback, truncate_tail, FeedbackError};
pub use payload::{assemble_payload, normalize_candidate, Payload};
pub use pool::SandboxPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Pass,
    Fail,
    Error,
    Timeout,
    HarnessError,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Pass => "pass",
            ExecStatus::Fail => "fail",
            ExecStatus::Error => "error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::HarnessError => "harness_error",
        }
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one sandboxed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    /// Truncated diagnostic suitable for a repair prompt. Empty on pass.
    #[serde(default)]
    pub feedback: String,
    /// Seconds, measured by the orchestrator.
    pub wall_time: f64,
    #[serde(default)]
    pub raw_stdout_tail: String,
    #[serde(default)]
    pub raw_stderr_tail: String,
    /// Untruncated diagnostic the feedback was cut from.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub diagnostic: String,
    /// Timeout that was in force, seconds.
    pub timeout: f64,
}

impl ExecutionResult {
    pub fn passed(&self) -> bool {
        self.status == ExecStatus::Pass
    }

    pub(crate) fn harness_error(message: impl Into<String>, wall_time: f64, timeout: f64) -> Self {
        let message = message.into();
        Self {
            status: ExecStatus::HarnessError,
            error_class: Some("HarnessError".into()),
            feedback: String::new(),
            wall_time,
            raw_stdout_tail: String::new(),
            raw_stderr_tail: String::new(),
            diagnostic: message,
            timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SandboxConfigError {
    #[error("sandbox timeout must be positive")]
    Timeout,
    #[error("feedback_limit must be positive")]
    FeedbackLimit,
    #[error("interpreter_command must not be empty")]
    Interpreter,
}

fn default_timeout() -> f64 {
    600.0
}

fn default_feedback_limit() -> usize {
    4000
}

fn default_interpreter() -> Vec<String> {
    vec!["python3".into()]
}

fn default_env_allowlist() -> Vec<String> {
    ["PATH", "HOME", "LANG", "LC_ALL", "PYTHONPATH", "VIRTUAL_ENV", "SYSTEMROOT"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    /// Per-execution wall-clock limit in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Maximum characters of feedback extracted for repair prompts.
    #[serde(default = "default_feedback_limit")]
    pub feedback_limit: usize,
    /// Interpreter executable followed by its arguments.
    #[serde(default = "default_interpreter")]
    pub interpreter_command: Vec<String>,
    /// Parent directory for per-run temporary directories; system temp if unset.
    #[serde(default)]
    pub workdir: Option<PathBuf>,
    /// Variables copied from the harness environment into the sandbox.
    #[serde(default = "default_env_allowlist")]
    pub env_allowlist: Vec<String>,
    /// Variables set explicitly in the sandbox (applied after the allowlist).
    #[serde(default)]
    pub extra_env: BTreeMap<String, String>,
    /// Runner shim to invoke; the bundled shim is materialized when unset.
    #[serde(default)]
    pub runner_shim: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            timeout: default_timeout(),
            feedback_limit: default_feedback_limit(),
            interpreter_command: default_interpreter(),
            workdir: None,
            env_allowlist: default_env_allowlist(),
            extra_env: BTreeMap::new(),
            runner_shim: None,
        }
    }
}

impl SandboxConfig {
    pub fn with_timeout(mut self, seconds: f64) -> Self {
        self.timeout = seconds;
        self
    }

    pub fn validate(&self) -> Result<(), SandboxConfigError> {
        if !(self.timeout > 0.0) || !self.timeout.is_finite() {
            return Err(SandboxConfigError::Timeout);
        }
        if self.feedback_limit == 0 {
            return Err(SandboxConfigError::FeedbackLimit);
        }
        if self.interpreter_command.is_empty() || self.interpreter_command[0].is_empty() {
            return Err(SandboxConfigError::Interpreter);
        }
        Ok(())
    }

    pub fn timeout_duration(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }
}
