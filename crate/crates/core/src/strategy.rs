//! Zero-shot, retrieval-augmented and execute-and-repair inference over one task.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{Gateway, GenerationRequest, Message, ReasoningEffort, RequestTags, Verbosity};
use crate::record::{Attempt, RunRecord};
use crate::retrieval::{RetrievalPipelineConfig, Retriever};
use crate::sandbox::{assemble_payload, truncate_tail, ExecStatus, SandboxConfig, SandboxPool};
use crate::task::BenchmarkTask;

pub const MAX_REPAIRS_LIMIT: u32 = 5;
pub const FEEDBACK_CAP: usize = 4000;
/// Feedback lines sharing a window this long with the reference solution or
/// test are withheld from the model.
pub const GROUND_TRUTH_WINDOW: usize = 20;

pub const INSTRUCTION: &str = "Complete the following Python function. \
Reply with the full function definition in a single ```python code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    Rag,
    Agent,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::Rag => "rag",
            Strategy::Agent => "agent",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" | "zero-shot" => Ok(Strategy::ZeroShot),
            "rag" => Ok(Strategy::Rag),
            "agent" => Ok(Strategy::Agent),
            other => Err(format!("unknown strategy `{other}` (expected zero_shot, rag or agent)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub max_repairs: u32,
    pub generator_model: String,
    /// Falls back to the generator when unset.
    #[serde(default)]
    pub repair_model: Option<String>,
    #[serde(default)]
    pub retrieval: Option<RetrievalPipelineConfig>,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub reasoning_effort: Option<ReasoningEffort>,
    #[serde(default)]
    pub verbosity: Option<Verbosity>,
}

impl AgentConfig {
    pub fn new(generator_model: impl Into<String>) -> Self {
        Self {
            max_repairs: 0,
            generator_model: generator_model.into(),
            repair_model: None,
            retrieval: None,
            sandbox: SandboxConfig::default(),
            temperature: 0.0,
            max_output_tokens: None,
            reasoning_effort: None,
            verbosity: None,
        }
    }

    pub fn repair_model(&self) -> &str {
        self.repair_model.as_deref().unwrap_or(&self.generator_model)
    }

    /// `gen` or `gen>repair` for hybrid configurations.
    pub fn model_label(&self) -> String {
        match self.repair_model.as_deref() {
            Some(r) if r != self.generator_model && self.max_repairs > 0 => format!("{}>{}", self.generator_model, r),
            _ => self.generator_model.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.max_repairs > MAX_REPAIRS_LIMIT {
            return Err(StrategyError::Config(format!("max_repairs must be at most {MAX_REPAIRS_LIMIT}, got {}", self.max_repairs)));
        }
        if self.generator_model.trim().is_empty() {
            return Err(StrategyError::Config("generator_model must not be empty".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(StrategyError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if let Some(r) = &self.retrieval {
            r.validate().map_err(|e| StrategyError::Config(format!("retrieval: {e}")))?;
        }
        self.sandbox.validate().map_err(|e| StrategyError::Config(format!("sandbox: {e}")))
    }
}

/// Label recorded with each RunRecord, e.g. `zero_shot`, `rag`, `agent(5)`, `agent(5)+rag`.
pub fn strategy_label(strategy: Strategy, cfg: &AgentConfig) -> String {
    match strategy {
        Strategy::ZeroShot => "zero_shot".into(),
        Strategy::Rag => "rag".into(),
        Strategy::Agent if cfg.retrieval.is_some() => format!("agent({})+rag", cfg.max_repairs),
        Strategy::Agent => format!("agent({})", cfg.max_repairs),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyError {
    #[error("configuration error: {0}")]
    Config(String),
}

pub fn repair_message(feedback: &str) -> String {
    format!("Your previous solution failed with: {feedback}. Provide a corrected solution.")
}

fn char_windows(text: &str, width: usize) -> HashSet<&str> {
    let idx: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    (0..idx.len().saturating_sub(width)).map(|s| &text[idx[s]..idx[s + width]]).collect()
}

/// Replaces every feedback line that overlaps the reference material in a
/// window of `GROUND_TRUTH_WINDOW` characters with `[redacted]`.
pub fn redact_ground_truth(feedback: &str, references: &[&str]) -> String {
    let forbidden: HashSet<&str> = references.iter().flat_map(|r| char_windows(r, GROUND_TRUTH_WINDOW)).collect();
    if forbidden.is_empty() {
        return feedback.to_string();
    }
    let mut current = feedback.to_string();
    // A replacement can create new adjacencies, so repeat until stable.
    loop {
        let idx: Vec<usize> = current.char_indices().map(|(i, _)| i).chain([current.len()]).collect();
        let mut covered = vec![false; idx.len()];
        for s in 0..idx.len().saturating_sub(GROUND_TRUTH_WINDOW) {
            if forbidden.contains(&current[idx[s]..idx[s + GROUND_TRUTH_WINDOW]]) {
                covered[s..s + GROUND_TRUTH_WINDOW].iter_mut().for_each(|c| *c = true);
            }
        }
        if !covered.iter().any(|&c| c) {
            return current;
        }
        let mut out = Vec::new();
        let mut pos = 0;
        for line in current.split('\n') {
            let n = line.chars().count();
            let hit = covered[pos..pos + n + usize::from(pos + n < covered.len() - 1)].iter().any(|&c| c);
            out.push(if hit { "[redacted]" } else { line });
            pos += n + 1;
        }
        let next = out.join("\n");
        if next == current {
            return next;
        }
        current = next;
    }
}

fn prompt_hash(messages: &[Message]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Executes tasks under a strategy against a gateway and sandbox pool.
pub struct StrategyRunner<'a> {
    gateway: &'a Gateway,
    pool: &'a SandboxPool,
    retriever: Option<&'a Retriever>,
}

impl<'a> StrategyRunner<'a> {
    pub fn new(gateway: &'a Gateway, pool: &'a SandboxPool) -> Self {
        Self { gateway, pool, retriever: None }
    }

    pub fn with_retriever(mut self, retriever: &'a Retriever) -> Self {
        self.retriever = Some(retriever);
        self
    }

    /// Checks preconditions that must hold before any model call.
    pub fn preflight(&self, strategy: Strategy, cfg: &AgentConfig) -> Result<(), StrategyError> {
        cfg.validate()?;
        match strategy {
            Strategy::ZeroShot if cfg.retrieval.is_some() || cfg.max_repairs != 0 => {
                return Err(StrategyError::Config("zero_shot requires no retrieval and max_repairs = 0".into()))
            }
            Strategy::Rag if cfg.retrieval.is_none() || cfg.max_repairs != 0 => {
                return Err(StrategyError::Config("rag requires a retrieval config and max_repairs = 0".into()))
            }
            Strategy::Agent if cfg.max_repairs == 0 => {
                return Err(StrategyError::Config("agent requires max_repairs in 1..=5".into()))
            }
            _ => {}
        }
        for model in [cfg.generator_model.as_str(), cfg.repair_model()] {
            if !self.gateway.resolves(model) {
                return Err(StrategyError::Config(format!("model `{model}` does not resolve to a configured provider")));
            }
        }
        if let Some(rcfg) = &cfg.retrieval {
            let retriever = self
                .retriever
                .ok_or_else(|| StrategyError::Config("retrieval configured but no index loaded; run `coderag index` first".into()))?;
            retriever.check(rcfg).map_err(|e| StrategyError::Config(format!("{e}; run `coderag index` first")))?;
        }
        Ok(())
    }

    pub fn run_zero_shot(&self, task: &BenchmarkTask, cfg: &AgentConfig) -> Result<RunRecord, StrategyError> {
        self.run(Strategy::ZeroShot, task, cfg)
    }

    pub fn run_rag(&self, task: &BenchmarkTask, cfg: &AgentConfig) -> Result<RunRecord, StrategyError> {
        self.run(Strategy::Rag, task, cfg)
    }

    pub fn run_agent(&self, task: &BenchmarkTask, cfg: &AgentConfig) -> Result<RunRecord, StrategyError> {
        self.run(Strategy::Agent, task, cfg)
    }

    pub fn run(&self, strategy: Strategy, task: &BenchmarkTask, cfg: &AgentConfig) -> Result<RunRecord, StrategyError> {
        self.preflight(strategy, cfg)?;
        Ok(self.run_unchecked(strategy, task, cfg))
    }

    /// Runs without preflight; callers evaluating a whole suite check once.
    pub fn run_unchecked(&self, strategy: Strategy, task: &BenchmarkTask, cfg: &AgentConfig) -> RunRecord {
        let start = Instant::now();
        let mut record = RunRecord {
            task_id: task.task_id.clone(),
            strategy: strategy_label(strategy, cfg),
            difficulty: Some(task.difficulty),
            attempts: Vec::new(),
            final_status: ExecStatus::HarnessError,
            executions_count: 0,
            wall_time_total: 0.0,
            tokens_total: 0,
            retrieval_chunk_ids: None,
            retrieval_empty: false,
            error: None,
        };

        let mut first = String::new();
        if let (Some(rcfg), Some(retriever)) = (&cfg.retrieval, self.retriever) {
            match retriever.retrieve_context(rcfg, &task.prompt) {
                Ok(ctx) => {
                    record.retrieval_empty = ctx.chunks.is_empty();
                    record.retrieval_chunk_ids = Some(ctx.chunk_ids());
                    if !ctx.block.is_empty() {
                        first.push_str(&ctx.block);
                        first.push_str("\n\n");
                    }
                }
                Err(e) => {
                    record.error = Some(format!("retrieval failed: {e}"));
                    record.wall_time_total = start.elapsed().as_secs_f64();
                    return record;
                }
            }
        }
        first.push_str(INSTRUCTION);
        first.push_str("\n\n");
        first.push_str(&task.prompt);
        let mut messages = vec![Message::user(first)];

        let references = [task.canonical_solution.as_str(), task.test.as_str()];
        let max_attempts = 1 + cfg.max_repairs;
        for attempt in 0..max_attempts {
            let model = if attempt == 0 { cfg.generator_model.as_str() } else { cfg.repair_model() };
            let request = GenerationRequest {
                model_id: model.to_string(),
                messages: messages.clone(),
                temperature: cfg.temperature,
                max_output_tokens: cfg.max_output_tokens,
                reasoning_effort: cfg.reasoning_effort,
                verbosity: cfg.verbosity,
                tags: RequestTags { task_id: Some(task.task_id.clone()), attempt: Some(attempt) },
            };
            let generation = match self.gateway.generate(&request) {
                Ok(g) => g,
                Err(e) => {
                    record.final_status = ExecStatus::HarnessError;
                    record.error = Some(format!("generation failed at attempt {attempt}: {e}"));
                    break;
                }
            };
            let mut result = self.pool.execute(&assemble_payload(task, &generation.text));
            if !result.passed() {
                result.feedback = truncate_tail(&redact_ground_truth(&result.feedback, &references), FEEDBACK_CAP);
            }
            record.tokens_total += generation.tokens_in + generation.tokens_out;
            record.final_status = result.status;
            if result.status == ExecStatus::HarnessError {
                record.error = Some(format!("sandbox fault at attempt {attempt}: {}", result.diagnostic));
            }
            let feedback = result.feedback.clone();
            let status = result.status;
            record.attempts.push(Attempt {
                attempt_index: attempt,
                model_id: model.to_string(),
                model_version: generation.model_version_reported,
                prompt_hash: prompt_hash(&messages),
                completion: generation.text.clone(),
                result,
                latency: generation.latency,
                tokens_in: generation.tokens_in,
                tokens_out: generation.tokens_out,
            });
            if status == ExecStatus::Pass || status == ExecStatus::HarnessError {
                break;
            }
            messages.push(Message::assistant(generation.text));
            messages.push(Message::user(repair_message(&feedback)));
        }
        record.executions_count = record.attempts.len() as u32;
        record.wall_time_total = start.elapsed().as_secs_f64();
        record
    }
}
