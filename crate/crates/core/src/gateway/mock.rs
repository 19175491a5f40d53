use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GatewayError, GenerationRequest, Provider, ProviderOutput, Role};

/// One scripted response. Every condition that is set must hold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    /// Model part of the id, e.g. `gen` for `mock:gen`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub task_id: Option<String>,
    #[serde(default)]
    pub attempt: Option<u32>,
    /// Substring of the most recent user message.
    #[serde(default)]
    pub feedback_contains: Option<String>,
    /// Substring of any message in the conversation.
    #[serde(default)]
    pub prompt_contains: Option<String>,
    pub completion: String,
}

impl MockRule {
    fn matches(&self, model: &str, request: &GenerationRequest) -> bool {
        let last_user = request.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str());
        self.model.as_deref().is_none_or(|m| m == model)
            && self.task_id.as_deref().is_none_or(|t| request.tags.task_id.as_deref() == Some(t))
            && self.attempt.is_none_or(|a| request.tags.attempt == Some(a))
            && self
                .feedback_contains
                .as_deref()
                .is_none_or(|s| last_user.is_some_and(|u| u.contains(s)))
            && self
                .prompt_contains
                .as_deref()
                .is_none_or(|s| request.messages.iter().any(|m| m.content.contains(s)))
    }
}

/// Deterministic script for the `mock` provider. First matching rule wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "default_version")]
    pub model_version: String,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_completion: Option<String>,
    /// Optional parameters this mock refuses, mirroring providers that reject
    /// e.g. `reasoning_effort` or `verbosity`.
    #[serde(default)]
    pub reject_params: Vec<String>,
}

fn default_version() -> String {
    "mock-1".into()
}

impl Default for MockScript {
    fn default() -> Self {
        Self { model_version: default_version(), rules: Vec::new(), default_completion: None, reject_params: Vec::new() }
    }
}

impl MockScript {
    /// Loads a JSON or TOML script, chosen by file extension.
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Mock(format!("cannot read script {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| GatewayError::Mock(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| GatewayError::Mock(format!("{}: {e}", path.display())))
        }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_default(mut self, completion: impl Into<String>) -> Self {
        self.default_completion = Some(completion.into());
        self
    }
}

/// Offline provider that answers from a script. Reports no token usage so
/// the gateway estimator fills it in.
pub struct MockProvider {
    script: MockScript,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, model: &str, request: &GenerationRequest) -> Result<ProviderOutput, GatewayError> {
        let rejected = |p: &str| self.script.reject_params.iter().any(|r| r == p);
        if request.reasoning_effort.is_some() && rejected("reasoning_effort") {
            return Err(GatewayError::Parameter { param: "reasoning_effort".into(), message: "not supported by this model".into() });
        }
        if request.verbosity.is_some() && rejected("verbosity") {
            return Err(GatewayError::Parameter { param: "verbosity".into(), message: "not supported by this model".into() });
        }
        if request.max_output_tokens.is_some() && rejected("max_output_tokens") {
            return Err(GatewayError::Parameter { param: "max_output_tokens".into(), message: "not supported by this model".into() });
        }
        let text = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(model, request))
            .map(|r| r.completion.clone())
            .or_else(|| self.script.default_completion.clone())
            .ok_or_else(|| {
                GatewayError::Mock(format!(
                    "no rule matched task {:?} attempt {:?}",
                    request.tags.task_id, request.tags.attempt
                ))
            })?;
        let max_chars = request.max_output_tokens.map(|t| t as usize * 4);
        let text = match max_chars {
            Some(n) => text.chars().take(n).collect(),
            None => text,
        };
        Ok(ProviderOutput { text, model_version: Some(self.script.model_version.clone()), tokens_in: None, tokens_out: None })
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let h = crate::retrieval::HashEmbedder::new(64);
        Ok(texts.iter().map(|t| h.vector(t)).collect())
    }

    fn rerank(&self, _model: &str, query: &str, documents: &[&str]) -> Result<Vec<f64>, GatewayError> {
        use crate::retrieval::PairScorer;
        crate::retrieval::LexicalOverlapScorer.score(query, documents).map_err(GatewayError::Mock)
    }
}
