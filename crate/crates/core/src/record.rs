//! Per-task evaluation outcome with its full attempt trace.

use serde::{Deserialize, Serialize};

use crate::sandbox::{ExecStatus, ExecutionResult};
use crate::task::Difficulty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt_index: u32,
    pub model_id: String,
    pub model_version: String,
    /// sha256 of the serialized message list sent for this attempt.
    pub prompt_hash: String,
    pub completion: String,
    pub result: ExecutionResult,
    pub latency: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub strategy: String,
    pub difficulty: Option<Difficulty>,
    pub attempts: Vec<Attempt>,
    pub final_status: ExecStatus,
    pub executions_count: u32,
    pub wall_time_total: f64,
    pub tokens_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_chunk_ids: Option<Vec<String>>,
    /// Set when retrieval ran but produced no context.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub retrieval_empty: bool,
    /// Harness-side failure description when `final_status` is `harness_error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("{task_id}: {message}")]
    Invariant { task_id: String, message: String },
}

impl RunRecord {
    /// Model version strings reported across attempts, deduplicated in order.
    pub fn model_versions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for a in &self.attempts {
            if !out.contains(&a.model_version.as_str()) {
                out.push(&a.model_version);
            }
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.final_status == ExecStatus::Pass
    }

    /// Checks the trace invariants against a repair bound.
    pub fn check(&self, max_repairs: u32) -> Result<(), RecordError> {
        let fail = |message: String| Err(RecordError::Invariant { task_id: self.task_id.clone(), message });
        if self.executions_count as usize != self.attempts.len() {
            return fail(format!("executions_count {} but {} attempts", self.executions_count, self.attempts.len()));
        }
        if self.executions_count > 1 + max_repairs {
            return fail(format!("executions_count {} exceeds 1 + {max_repairs}", self.executions_count));
        }
        if self.executions_count == 0 && self.final_status != ExecStatus::HarnessError {
            return fail("no attempts recorded".into());
        }
        for (i, a) in self.attempts.iter().enumerate() {
            if a.attempt_index as usize != i {
                return fail(format!("attempt {} has index {}", i, a.attempt_index));
            }
        }
        if let Some(pos) = self.attempts.iter().position(|a| a.result.status == ExecStatus::Pass) {
            if pos + 1 != self.attempts.len() {
                return fail(format!("attempts continue after pass at index {pos}"));
            }
        }
        if self.final_status == ExecStatus::Pass && !self.attempts.last().is_some_and(|a| a.result.passed()) {
            return fail("final_status pass without a passing last attempt".into());
        }
        Ok(())
    }

    /// Copy with every timing-dependent field zeroed, for determinism checks.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        r.wall_time_total = 0.0;
        for a in &mut r.attempts {
            a.latency = 0.0;
            a.result.wall_time = 0.0;
        }
        r
    }
}
