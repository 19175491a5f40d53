use std::sync::Arc;

use serde_json::{json, Value};

use super::transport::{HttpResponse, HttpTransport};
use super::{GatewayError, GenerationRequest, Provider, ProviderOutput};

/// Maps a non-2xx response to a gateway error. `param` extraction covers the
/// `{"error": {"param": ...}}` shape used by OpenAI-compatible servers.
pub(super) fn classify_http_error(provider: &str, resp: &HttpResponse) -> GatewayError {
    let parsed: Option<Value> = serde_json::from_str(&resp.body).ok();
    let err = parsed.as_ref().and_then(|v| v.get("error"));
    let message = err
        .and_then(|e| e.get("message").and_then(Value::as_str).or_else(|| e.as_str()))
        .map(str::to_string)
        .unwrap_or_else(|| resp.body.chars().take(500).collect());
    match resp.status {
        401 | 403 => GatewayError::Auth(format!("{provider}: {message}")),
        400 | 422 => match err.and_then(|e| e.get("param")).and_then(Value::as_str) {
            Some(param) => GatewayError::Parameter { param: param.to_string(), message },
            None => GatewayError::Provider { provider: provider.to_string(), status: resp.status, message },
        },
        status => GatewayError::Provider { provider: provider.to_string(), status, message },
    }
}

pub(super) fn post(
    transport: &dyn HttpTransport,
    provider: &str,
    url: &str,
    headers: &[(String, String)],
    body: &Value,
) -> Result<Value, GatewayError> {
    let resp = transport
        .post_json(url, headers, body)
        .map_err(|message| GatewayError::Transport { provider: provider.to_string(), attempts: 1, message })?;
    if !(200..300).contains(&resp.status) {
        return Err(classify_http_error(provider, &resp));
    }
    serde_json::from_str(&resp.body)
        .map_err(|e| GatewayError::Integrity(format!("{provider} returned malformed JSON: {e}")))
}

/// Chat-completions style provider. Serves OpenAI itself and any endpoint
/// speaking the same protocol (Gemini's compatibility layer, vLLM, ...).
pub struct OpenAiCompatibleProvider {
    name: String,
    base_url: String,
    api_key: String,
    transport: Arc<dyn HttpTransport>,
}

impl OpenAiCompatibleProvider {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, api_key: impl Into<String>, transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            transport,
        }
    }

    fn headers(&self) -> Vec<(String, String)> {
        vec![("authorization".into(), format!("Bearer {}", self.api_key))]
    }

    /// Request body. Optional parameters are omitted unless set.
    pub fn request_body(model: &str, request: &GenerationRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = json!({"model": model, "messages": messages, "temperature": request.temperature});
        if let Some(n) = request.max_output_tokens {
            body["max_completion_tokens"] = json!(n);
        }
        if let Some(e) = request.reasoning_effort {
            body["reasoning_effort"] = json!(e.to_string());
        }
        if let Some(v) = request.verbosity {
            body["verbosity"] = json!(v.to_string());
        }
        body
    }

    pub fn parse_response(provider: &str, v: &Value) -> Result<ProviderOutput, GatewayError> {
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Integrity(format!("{provider} response has no choices[0].message.content")))?;
        Ok(ProviderOutput {
            text: text.to_string(),
            model_version: v.get("model").and_then(Value::as_str).map(str::to_string),
            tokens_in: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            tokens_out: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        })
    }
}

impl Provider for OpenAiCompatibleProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, model: &str, request: &GenerationRequest) -> Result<ProviderOutput, GatewayError> {
        let url = format!("{}/chat/completions", self.base_url);
        let v = post(&*self.transport, &self.name, &url, &self.headers(), &Self::request_body(model, request))?;
        Self::parse_response(&self.name, &v)
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let url = format!("{}/embeddings", self.base_url);
        let v = post(&*self.transport, &self.name, &url, &self.headers(), &json!({"model": model, "input": texts}))?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Integrity(format!("{} embedding response has no data", self.name)))?;
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let emb = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| GatewayError::Integrity("embedding item without vector".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| GatewayError::Integrity("non-numeric embedding component".into()))?;
            rows.push((index, emb));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }

    /// `POST {base}/rerank` with `{model, query, documents}`, answered by
    /// `{results: [{index, relevance_score}]}`.
    fn rerank(&self, model: &str, query: &str, documents: &[&str]) -> Result<Vec<f64>, GatewayError> {
        let url = format!("{}/rerank", self.base_url);
        let body = json!({"model": model, "query": query, "documents": documents});
        let v = post(&*self.transport, &self.name, &url, &self.headers(), &body)?;
        let results = v
            .get("results")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Integrity(format!("{} rerank response has no results", self.name)))?;
        let mut scores = vec![f64::NAN; documents.len()];
        for r in results {
            let i = r.get("index").and_then(Value::as_u64).map(|i| i as usize);
            let s = r.get("relevance_score").and_then(Value::as_f64);
            match (i, s) {
                (Some(i), Some(s)) if i < scores.len() => scores[i] = s,
                _ => return Err(GatewayError::Integrity("malformed rerank result".into())),
            }
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(GatewayError::Integrity("rerank response did not score every document".into()));
        }
        Ok(scores)
    }
}
