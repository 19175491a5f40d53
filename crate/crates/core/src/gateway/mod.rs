//! Provider-agnostic text generation and embedding.
//!
//! Model identifiers take the form `<provider>:<model>`, e.g.
//! `openai:gpt-4.1`, `anthropic:claude-sonnet-4-5`, `mock:scripted`.
//! Embedder identifiers are either `hash-<dim>` (local feature hashing) or a
//! provider-qualified model such as `openai:text-embedding-3-large`.

mod anthropic;
mod calllog;
mod mock;
mod openai;
mod transport;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::retrieval::{EmbedError, Embedder, HashEmbedder, PairScorer};

pub use anthropic::AnthropicProvider;
pub use calllog::{CallLog, CallLogEntry};
pub use mock::{MockProvider, MockRule, MockScript};
pub use openai::OpenAiCompatibleProvider;
pub use transport::{HttpResponse, HttpTransport, UreqTransport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure from {provider} after {attempts} attempt(s): {message}")]
    Transport { provider: String, attempts: u32, message: String },
    #[error("provider rejected parameter `{param}`: {message}")]
    Parameter { param: String, message: String },
    #[error("authentication failed for {0}")]
    Auth(String),
    #[error("{provider} returned HTTP {status}: {message}")]
    Provider { provider: String, status: u16, message: String },
    #[error("unknown model `{0}` (expected `<provider>:<model>` with a registered provider)")]
    UnknownModel(String),
    #[error("integrity failure: {0}")]
    Integrity(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("mock provider: {0}")]
    Mock(String),
    #[error("invalid request: {0}")]
    Request(String),
}

impl GatewayError {
    /// Transient failures worth retrying. Parameter errors never are.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport { .. } => true,
            GatewayError::Provider { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Minimal,
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Low,
    Medium,
    High,
}

impl fmt::Display for ReasoningEffort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReasoningEffort::Minimal => "minimal",
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
            ReasoningEffort::High => "high",
        })
    }
}

impl fmt::Display for Verbosity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verbosity::Low => "low",
            Verbosity::Medium => "medium",
            Verbosity::High => "high",
        })
    }
}

/// Harness-side context carried with a request. Never sent to a remote
/// provider; the mock provider matches its script rules against it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestTags {
    pub task_id: Option<String>,
    pub attempt: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    /// Provider maximum when unset.
    pub max_output_tokens: Option<u32>,
    pub reasoning_effort: Option<ReasoningEffort>,
    pub verbosity: Option<Verbosity>,
    pub tags: RequestTags,
}

impl GenerationRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            max_output_tokens: None,
            reasoning_effort: None,
            verbosity: None,
            tags: RequestTags::default(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::Request("messages must not be empty".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(GatewayError::Request(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub model_version_reported: String,
    /// Seconds from request start to response body received, including retries.
    pub latency: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// True when token counts came from the local estimator.
    pub tokens_estimated: bool,
    pub provider: String,
}

/// What a provider returns before gateway-side accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderOutput {
    pub text: String,
    pub model_version: Option<String>,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    /// `model` is the part of the model id after the provider prefix.
    fn generate(&self, model: &str, request: &GenerationRequest) -> Result<ProviderOutput, GatewayError>;

    fn embed(&self, model: &str, _texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Err(GatewayError::Unsupported(format!("{} does not serve embeddings (model `{model}`)", self.name())))
    }

    fn rerank(&self, model: &str, _query: &str, _documents: &[&str]) -> Result<Vec<f64>, GatewayError> {
        Err(GatewayError::Unsupported(format!("{} does not serve reranking (model `{model}`)", self.name())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(16) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_attempts: 1, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before retry number `attempt` (1-based): `base * 2^(attempt-1)`, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Enforces a minimum spacing between request starts for one provider.
#[derive(Debug)]
struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn acquire(&self) {
        let mut slot = self.next_slot.lock().expect("rate limiter lock");
        let now = Instant::now();
        if let Some(at) = *slot {
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        *slot = Some(Instant::now() + self.min_interval);
    }
}

/// Rough token estimate (four characters per token) used when a provider
/// reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}

fn split_model_id(model_id: &str) -> Result<(&str, &str), GatewayError> {
    match model_id.split_once(':') {
        Some((p, m)) if !p.is_empty() && !m.is_empty() => Ok((p, m)),
        _ => Err(GatewayError::UnknownModel(model_id.to_string())),
    }
}

/// Routes requests to registered providers with retry, rate limiting, token
/// accounting and call logging.
pub struct Gateway {
    providers: BTreeMap<String, Arc<dyn Provider>>,
    limiters: BTreeMap<String, RateLimiter>,
    retry: RetryPolicy,
    call_log: Option<CallLog>,
    embed_batch: usize,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new(RetryPolicy::default())
    }
}

impl Gateway {
    pub fn new(retry: RetryPolicy) -> Self {
        Self { providers: BTreeMap::new(), limiters: BTreeMap::new(), retry, call_log: None, embed_batch: 64 }
    }

    pub fn register(mut self, provider: Arc<dyn Provider>) -> Self {
        self.providers.insert(provider.name().to_string(), provider);
        self
    }

    pub fn with_rate_limit(mut self, provider: &str, min_interval: Duration) -> Self {
        self.limiters
            .insert(provider.to_string(), RateLimiter { min_interval, next_slot: Mutex::new(None) });
        self
    }

    pub fn with_call_log(mut self, path: &Path) -> std::io::Result<Self> {
        self.call_log = Some(CallLog::open(path)?);
        Ok(self)
    }

    pub fn with_embed_batch(mut self, batch: usize) -> Self {
        self.embed_batch = batch.max(1);
        self
    }

    /// Registers every provider whose credentials are present in the
    /// environment, plus a mock provider when `mock_script` is given.
    ///
    /// | provider  | key variable        | base URL override     |
    /// |-----------|---------------------|-----------------------|
    /// | openai    | `OPENAI_API_KEY`    | `OPENAI_BASE_URL`     |
    /// | anthropic | `ANTHROPIC_API_KEY` | `ANTHROPIC_BASE_URL`  |
    /// | gemini    | `GEMINI_API_KEY`    | `GEMINI_BASE_URL`     |
    pub fn from_env(retry: RetryPolicy, mock_script: Option<MockScript>) -> Self {
        let mut gw = Self::new(retry);
        let transport: Arc<dyn HttpTransport> = Arc::new(UreqTransport::new(Duration::from_secs(600)));
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(key) = var("OPENAI_API_KEY") {
            let base = var("OPENAI_BASE_URL").unwrap_or_else(|| "https://api.openai.com/v1".into());
            gw = gw.register(Arc::new(OpenAiCompatibleProvider::new("openai", base, key, Arc::clone(&transport))));
        }
        if let Some(key) = var("GEMINI_API_KEY") {
            let base = var("GEMINI_BASE_URL")
                .unwrap_or_else(|| "https://generativelanguage.googleapis.com/v1beta/openai".into());
            gw = gw.register(Arc::new(OpenAiCompatibleProvider::new("gemini", base, key, Arc::clone(&transport))));
        }
        if let Some(key) = var("ANTHROPIC_API_KEY") {
            let base = var("ANTHROPIC_BASE_URL").unwrap_or_else(|| "https://api.anthropic.com/v1".into());
            gw = gw.register(Arc::new(AnthropicProvider::new(base, key, Arc::clone(&transport))));
        }
        if let Some(script) = mock_script {
            gw = gw.register(Arc::new(MockProvider::new(script)));
        }
        gw
    }

    pub fn has_provider(&self, name: &str) -> bool {
        self.providers.contains_key(name)
    }

    /// Whether `model_id` routes to a registered provider.
    pub fn resolves(&self, model_id: &str) -> bool {
        split_model_id(model_id).is_ok_and(|(p, _)| self.providers.contains_key(p))
    }

    fn provider_for<'a>(&self, model_id: &'a str) -> Result<(Arc<dyn Provider>, &'a str), GatewayError> {
        let (name, model) = split_model_id(model_id)?;
        let provider = self
            .providers
            .get(name)
            .ok_or_else(|| GatewayError::UnknownModel(model_id.to_string()))?;
        Ok((Arc::clone(provider), model))
    }

    fn with_retry<T>(&self, provider: &str, mut call: impl FnMut() -> Result<T, GatewayError>) -> (Result<T, GatewayError>, u32) {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = self.limiters.get(provider) {
                limiter.acquire();
            }
            match call() {
                Ok(v) => return (Ok(v), attempt),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    tracing::warn!(provider, attempt, error = %e, "retrying after transient failure");
                    std::thread::sleep(self.retry.backoff(attempt));
                }
                Err(e) if e.is_retryable() => {
                    let message = e.to_string();
                    return (Err(GatewayError::Transport { provider: provider.to_string(), attempts: attempt, message }), attempt);
                }
                Err(e) => return (Err(e), attempt),
            }
        }
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<Generation, GatewayError> {
        request.validate()?;
        let (provider, model) = self.provider_for(&request.model_id)?;
        let start = Instant::now();
        let (result, attempts) = self.with_retry(provider.name(), || provider.generate(model, request));
        let latency = start.elapsed().as_secs_f64();
        let result = result.map(|out| {
            let estimated = out.tokens_in.is_none() || out.tokens_out.is_none();
            let prompt_chars: String = request.messages.iter().map(|m| m.content.as_str()).collect();
            Generation {
                tokens_in: out.tokens_in.unwrap_or_else(|| estimate_tokens(&prompt_chars)),
                tokens_out: out.tokens_out.unwrap_or_else(|| estimate_tokens(&out.text)),
                tokens_estimated: estimated,
                model_version_reported: out
                    .model_version
                    .filter(|v| !v.is_empty())
                    .unwrap_or_else(|| request.model_id.clone()),
                text: out.text,
                latency,
                provider: provider.name().to_string(),
            }
        });
        if let Some(log) = &self.call_log {
            log.append(&CallLogEntry::for_generation(&request.model_id, provider.name(), &result, latency, attempts));
        }
        result
    }

    /// Embeds `texts` with `embedder_id`, batching transparently.
    pub fn embed(&self, texts: &[String], embedder_id: &str) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(local) = HashEmbedder::from_id(embedder_id) {
            return Ok(local.embed(texts).expect("hash embedder is infallible"));
        }
        let (provider, model) = self.provider_for(embedder_id)?;
        let start = Instant::now();
        let mut out: Vec<Vec<f32>> = Vec::with_capacity(texts.len());
        let mut total_attempts = 0;
        let mut failure = None;
        for batch in texts.chunks(self.embed_batch) {
            let (result, attempts) = self.with_retry(provider.name(), || provider.embed(model, batch));
            total_attempts += attempts;
            match result {
                Ok(vectors) if vectors.len() == batch.len() => out.extend(vectors),
                Ok(vectors) => {
                    failure = Some(GatewayError::Integrity(format!(
                        "{} returned {} vectors for {} inputs",
                        provider.name(),
                        vectors.len(),
                        batch.len()
                    )));
                    break;
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if failure.is_none() {
            if let Some(dim) = out.first().map(Vec::len) {
                if let Some(bad) = out.iter().find(|v| v.len() != dim || v.is_empty()) {
                    failure = Some(GatewayError::Integrity(format!(
                        "inconsistent embedding dimensions from {}: {} vs {}",
                        provider.name(),
                        dim,
                        bad.len()
                    )));
                }
            }
        }
        let latency = start.elapsed().as_secs_f64();
        let result = match failure {
            Some(e) => Err(e),
            None => Ok(out),
        };
        if let Some(log) = &self.call_log {
            let tokens: u64 = texts.iter().map(|t| estimate_tokens(t)).sum();
            log.append(&CallLogEntry::for_embedding(embedder_id, provider.name(), tokens, result.as_ref().err(), latency, total_attempts));
        }
        result
    }

    pub fn rerank(&self, model_id: &str, query: &str, documents: &[&str]) -> Result<Vec<f64>, GatewayError> {
        let (provider, model) = self.provider_for(model_id)?;
        let (result, _) = self.with_retry(provider.name(), || provider.rerank(model, query, documents));
        let scores = result?;
        if scores.len() != documents.len() {
            return Err(GatewayError::Integrity(format!("{} scores for {} documents", scores.len(), documents.len())));
        }
        Ok(scores)
    }
}

/// Adapts a gateway embedding model to the retrieval `Embedder` trait.
pub struct GatewayEmbedder {
    gateway: Arc<Gateway>,
    id: String,
}

impl GatewayEmbedder {
    pub fn new(gateway: Arc<Gateway>, id: impl Into<String>) -> Self {
        Self { gateway, id: id.into() }
    }
}

impl Embedder for GatewayEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        self.gateway.embed(texts, &self.id).map_err(|e| match e {
            GatewayError::Integrity(m) => EmbedError::Integrity(m),
            GatewayError::UnknownModel(m) => EmbedError::Unknown(m),
            other => EmbedError::Transport(other.to_string()),
        })
    }
}

/// Resolves an embedder id to a local hash embedder or a gateway-backed one.
pub fn resolve_embedder(gateway: &Arc<Gateway>, id: &str) -> Arc<dyn Embedder> {
    match HashEmbedder::from_id(id) {
        Some(h) => Arc::new(h),
        None => Arc::new(GatewayEmbedder::new(Arc::clone(gateway), id)),
    }
}

/// Pairwise relevance scorer served by a remote reranking model.
pub struct GatewayRerankScorer {
    gateway: Arc<Gateway>,
    model_id: String,
}

impl GatewayRerankScorer {
    pub fn new(gateway: Arc<Gateway>, model_id: impl Into<String>) -> Self {
        Self { gateway, model_id: model_id.into() }
    }
}

impl PairScorer for GatewayRerankScorer {
    fn id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, String> {
        self.gateway.rerank(&self.model_id, query, documents).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: GatewayError,
    }

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn generate(&self, _model: &str, _r: &GenerationRequest) -> Result<ProviderOutput, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(ProviderOutput { text: "ok".into(), model_version: Some("flaky-2025-01-01".into()), tokens_in: Some(7), tokens_out: None })
            }
        }
    }

    fn flaky(failures: u32, error: GatewayError) -> Arc<Flaky> {
        Arc::new(Flaky { failures, calls: AtomicU32::new(0), error })
    }

    fn fast_retry(max: u32) -> RetryPolicy {
        RetryPolicy { max_attempts: max, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn req() -> GenerationRequest {
        GenerationRequest::new("flaky:m", vec![Message::user("hello world")])
    }

    #[test]
    fn transient_errors_are_retried() {
        let p = flaky(2, GatewayError::Provider { provider: "flaky".into(), status: 503, message: "busy".into() });
        let gw = Gateway::new(fast_retry(3)).register(p.clone());
        let g = gw.generate(&req()).unwrap();
        assert_eq!(g.text, "ok");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        assert_eq!(g.tokens_in, 7);
        assert_eq!(g.tokens_out, 1);
        assert!(g.tokens_estimated);
        assert_eq!(g.model_version_reported, "flaky-2025-01-01");
    }

    #[test]
    fn exhausted_retries_become_transport_error() {
        let p = flaky(10, GatewayError::Transport { provider: "flaky".into(), attempts: 1, message: "reset".into() });
        let gw = Gateway::new(fast_retry(3)).register(p.clone());
        match gw.generate(&req()) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn parameter_errors_not_retried() {
        let p = flaky(10, GatewayError::Parameter { param: "verbosity".into(), message: "unsupported".into() });
        let gw = Gateway::new(fast_retry(5)).register(p.clone());
        assert!(matches!(gw.generate(&req()), Err(GatewayError::Parameter { .. })));
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn routing_and_validation() {
        let gw = Gateway::new(fast_retry(1));
        assert!(matches!(gw.generate(&GenerationRequest::new("nope:x", vec![Message::user("a")])), Err(GatewayError::UnknownModel(_))));
        assert!(matches!(gw.generate(&GenerationRequest::new("bare", vec![Message::user("a")])), Err(GatewayError::UnknownModel(_))));
        assert!(matches!(gw.generate(&GenerationRequest::new("a:b", vec![])), Err(GatewayError::Request(_))));
        let mut r = GenerationRequest::new("a:b", vec![Message::user("a")]);
        r.temperature = -1.0;
        assert!(matches!(gw.generate(&r), Err(GatewayError::Request(_))));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(350) };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(350));
        assert_eq!(p.backoff(40), Duration::from_millis(350));
    }

    #[test]
    fn hash_embeddings_need_no_provider() {
        let gw = Gateway::new(fast_retry(1));
        assert!(gw.embed(&[], "hash-256").unwrap().is_empty());
        let v = gw.embed(&["quantum circuit".into(), "circuit quantum".into()], "hash-256").unwrap();
        assert_eq!(v[0], v[1]);
        assert!(matches!(gw.embed(&["x".into()], "openai:text-embedding-3-large"), Err(GatewayError::UnknownModel(_))));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let p = flaky(0, GatewayError::Mock(String::new()));
        let gw = Gateway::new(fast_retry(1)).register(p).with_rate_limit("flaky", Duration::from_millis(40));
        let start = Instant::now();
        for _ in 0..3 {
            gw.generate(&req()).unwrap();
        }
        assert!(start.elapsed() >= Duration::from_millis(80));
    }
}
