//! Run configuration file.
//!
//! ```toml
//! suite_path = "tasks.jsonl"
//! strategy = "agent"
//! output_path = "results/agent5.jsonl"
//! repeats = 1
//! concurrency = 4
//! index_dir = "index"
//! embedder = "hash-256"
//!
//! [agent]
//! max_repairs = 5
//! generator_model = "openai:gpt-4.1"
//! repair_model = "openai:gpt-5"
//!
//! [sandbox]
//! timeout = 600
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::report::Baseline;
use crate::retrieval::{ChunkingParams, RetrievalPipelineConfig};
use crate::sandbox::SandboxConfig;
use crate::strategy::{AgentConfig, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

fn default_repeats() -> u32 {
    1
}

fn default_concurrency() -> usize {
    1
}

fn default_embedder() -> String {
    "hash-256".into()
}

fn default_index_dir() -> PathBuf {
    PathBuf::from("index")
}

/// Generation settings from the `[agent]` table. Retrieval and sandbox
/// settings live at top level and are merged in by [`RunConfig::agent_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default)]
    pub max_repairs: u32,
    pub generator_model: String,
    #[serde(default)]
    pub repair_model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub reasoning_effort: Option<crate::gateway::ReasoningEffort>,
    #[serde(default)]
    pub verbosity: Option<crate::gateway::Verbosity>,
}

/// Corpus roots for `ingest`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaSection {
    #[serde(default)]
    pub docs: Vec<PathBuf>,
    #[serde(default)]
    pub code: Vec<PathBuf>,
    #[serde(default)]
    pub chunking: ChunkingParams,
    /// File extensions per corpus overriding the defaults.
    #[serde(default)]
    pub extensions: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// JSON or TOML script for the `mock` provider.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub call_log: Option<PathBuf>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    /// Minimum milliseconds between requests, per provider name.
    #[serde(default)]
    pub min_interval_ms: BTreeMap<String, u64>,
    /// Model id serving the `cross_rerank` stage; lexical overlap when unset.
    #[serde(default)]
    pub cross_encoder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub suite_path: PathBuf,
    pub strategy: Strategy,
    pub agent: AgentSection,
    #[serde(default)]
    pub retrieval: Option<RetrievalPipelineConfig>,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    pub output_path: PathBuf,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default)]
    pub resume: bool,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_index_dir")]
    pub index_dir: PathBuf,
    #[serde(default = "default_embedder")]
    pub embedder: String,
    #[serde(default)]
    pub corpora: CorporaSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub baseline: Option<Baseline>,
}

impl RunConfig {
    /// Parses and validates; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text, path)?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.suite_path);
        fix(&mut self.output_path);
        fix(&mut self.index_dir);
        self.corpora.docs.iter_mut().for_each(fix);
        self.corpora.code.iter_mut().for_each(fix);
        if let Some(p) = self.gateway.mock_script.as_mut() {
            fix(p);
        }
        if let Some(p) = self.gateway.call_log.as_mut() {
            fix(p);
        }
        if let Some(dir) = self.sandbox.workdir.as_mut() {
            fix(dir);
        }
        if let Some(p) = self.sandbox.runner_shim.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repeats < 1 {
            return Err(invalid("repeats", "must be >= 1"));
        }
        if self.concurrency < 1 {
            return Err(invalid("concurrency", "must be >= 1"));
        }
        if self.agent.generator_model.trim().is_empty() {
            return Err(invalid("agent.generator_model", "must not be empty"));
        }
        if self.agent.max_repairs > crate::strategy::MAX_REPAIRS_LIMIT {
            return Err(invalid("agent.max_repairs", format!("must be at most {}", crate::strategy::MAX_REPAIRS_LIMIT)));
        }
        if !(self.agent.temperature >= 0.0) {
            return Err(invalid("agent.temperature", "must be >= 0"));
        }
        match self.strategy {
            Strategy::Agent if self.agent.max_repairs == 0 => {
                return Err(invalid("agent.max_repairs", "strategy = \"agent\" requires max_repairs >= 1"))
            }
            Strategy::Rag if self.retrieval.is_none() => {
                return Err(invalid("retrieval", "strategy = \"rag\" requires a [retrieval] table"))
            }
            _ => {}
        }
        if let Some(r) = &self.retrieval {
            r.validate().map_err(|e| invalid("retrieval", e.to_string()))?;
        }
        self.sandbox.validate().map_err(|e| invalid("sandbox", e.to_string()))?;
        self.corpora.chunking.validate().map_err(|e| invalid("corpora.chunking", e.to_string()))?;
        if let Some(b) = &self.baseline {
            if !(0.0..=1.0).contains(&b.pass_rate) {
                return Err(invalid("baseline.pass_rate", "must lie in [0, 1]"));
            }
        }
        if self.gateway.max_attempts == Some(0) {
            return Err(invalid("gateway.max_attempts", "must be >= 1"));
        }
        Ok(())
    }

    /// Effective strategy configuration. Zero-shot ignores retrieval and
    /// repairs; rag ignores repairs.
    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agent;
        let (max_repairs, retrieval) = match self.strategy {
            Strategy::ZeroShot => (0, None),
            Strategy::Rag => (0, self.retrieval.clone()),
            Strategy::Agent => (a.max_repairs, self.retrieval.clone()),
        };
        AgentConfig {
            max_repairs,
            generator_model: a.generator_model.clone(),
            repair_model: a.repair_model.clone(),
            retrieval,
            sandbox: self.sandbox.clone(),
            temperature: a.temperature,
            max_output_tokens: a.max_output_tokens,
            reasoning_effort: a.reasoning_effort,
            verbosity: a.verbosity,
        }
    }

    /// sha256 over the settings that determine results. Output location,
    /// repeat count, resume and concurrency are excluded so repeats and
    /// resumed runs share a hash.
    pub fn config_hash(&self) -> String {
        let agent = self.agent_config();
        let material = serde_json::json!({
            "strategy": self.strategy,
            "agent": {
                "max_repairs": agent.max_repairs,
                "generator_model": agent.generator_model,
                "repair_model": agent.repair_model,
                "temperature": agent.temperature,
                "max_output_tokens": agent.max_output_tokens,
                "reasoning_effort": agent.reasoning_effort,
                "verbosity": agent.verbosity,
            },
            "retrieval": agent.retrieval,
            "sandbox": {
                "timeout": self.sandbox.timeout,
                "feedback_limit": self.sandbox.feedback_limit,
                "interpreter_command": self.sandbox.interpreter_command,
            },
            "embedder": self.embedder,
            "cross_encoder": self.gateway.cross_encoder,
        });
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }
}
