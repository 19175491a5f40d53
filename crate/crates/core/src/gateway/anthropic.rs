use std::sync::Arc;

use serde_json::{json, Value};

use super::openai::post;
use super::transport::HttpTransport;
use super::{GatewayError, GenerationRequest, Provider, ProviderOutput, Role};

/// The messages API requires `max_tokens`; this is used when the request
/// leaves it unset.
pub const DEFAULT_MAX_TOKENS: u32 = 32_000;

pub struct AnthropicProvider {
    base_url: String,
    api_key: String,
    transport: Arc<dyn HttpTransport>,
}

impl AnthropicProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), transport }
    }

    pub fn request_body(model: &str, request: &GenerationRequest) -> Result<Value, GatewayError> {
        if request.reasoning_effort.is_some() {
            return Err(GatewayError::Parameter { param: "reasoning_effort".into(), message: "not supported by the messages API".into() });
        }
        if request.verbosity.is_some() {
            return Err(GatewayError::Parameter { param: "verbosity".into(), message: "not supported by the messages API".into() });
        }
        let system: Vec<&str> = request.messages.iter().filter(|m| m.role == Role::System).map(|m| m.content.as_str()).collect();
        let messages: Vec<Value> = request
            .messages
            .iter()
            .filter(|m| m.role != Role::System)
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
        });
        if !system.is_empty() {
            body["system"] = json!(system.join("\n\n"));
        }
        Ok(body)
    }

    pub fn parse_response(v: &Value) -> Result<ProviderOutput, GatewayError> {
        let blocks = v
            .get("content")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Integrity("anthropic response has no content".into()))?;
        let text: String = blocks
            .iter()
            .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
            .filter_map(|b| b.get("text").and_then(Value::as_str))
            .collect();
        Ok(ProviderOutput {
            text,
            model_version: v.get("model").and_then(Value::as_str).map(str::to_string),
            tokens_in: v.pointer("/usage/input_tokens").and_then(Value::as_u64),
            tokens_out: v.pointer("/usage/output_tokens").and_then(Value::as_u64),
        })
    }
}

impl Provider for AnthropicProvider {
    fn name(&self) -> &str {
        "anthropic"
    }

    fn generate(&self, model: &str, request: &GenerationRequest) -> Result<ProviderOutput, GatewayError> {
        let body = Self::request_body(model, request)?;
        let headers = vec![
            ("x-api-key".to_string(), self.api_key.clone()),
            ("anthropic-version".to_string(), "2023-06-01".to_string()),
        ];
        let v = post(&*self.transport, "anthropic", &format!("{}/messages", self.base_url), &headers, &body)?;
        Self::parse_response(&v)
    }
}
