//! HTTP adapters for the provider ports.
//!
//! Wire shapes follow the common JSON APIs:
//!
//! * embeddings: `POST {base}/embeddings` with `{"model", "input": [..]}`,
//!   answered by `{"data": [{"index", "embedding": [..]}]}`
//! * chat: `POST {base}/chat/completions` with
//!   `{"model", "messages": [{"role": "user", "content"}], "temperature"}`,
//!   answered by `{"choices": [{"message": {"content"}}], "usage": {"prompt_tokens", "completion_tokens"}}`
//! * rerank: `POST {base}/rerank` with `{"model", "query", "documents": [..]}`,
//!   answered by `{"results": [{"index", "relevance_score"}]}`
//!
//! Every request carries `Authorization: Bearer <key>` when a key is set.
//! Connection failures, 429 and 5xx responses are retried with exponential
//! backoff; 401/403 fail immediately.

use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatParams, ChatPort, Completion, EmbedderPort, ProviderError, RerankerPort};

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_in_flight() -> usize {
    8
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}

/// Connection settings shared by all HTTP adapters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Environment variable holding the key, consulted when `api_key` is unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            api_key_env: None,
            timeout_ms: default_timeout_ms(),
            max_in_flight: default_max_in_flight(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }

    fn resolved_key(&self) -> Option<String> {
        self.api_key.clone().or_else(|| {
            self.api_key_env
                .as_deref()
                .and_then(|name| std::env::var(name).ok())
        })
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock();
        while *used >= self.limit {
            self.freed.wait(&mut used);
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock() -= 1;
        self.0.freed.notify_one();
    }
}

/// JSON-over-HTTP client with retries, shared by the three adapters.
#[derive(Debug)]
pub struct HttpClient {
    port_id: String,
    config: EndpointConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    in_flight: InFlight,
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

impl HttpClient {
    pub fn new(port_id: impl Into<String>, config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            port_id: port_id.into(),
            api_key: config.resolved_key(),
            in_flight: InFlight::new(config.max_in_flight),
            config,
            agent,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let _permit = self.in_flight.acquire();
        let url = self.url(path);
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.try_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => {
                    tracing::debug!(port = %self.port_id, attempt, %reason, "provider call failed");
                    last = reason;
                }
            }
        }
        Err(ProviderError::unavailable(
            &self.port_id,
            format!("{attempts} attempts failed; last error: {last}"),
        ))
    }

    fn try_once(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        let mut request = self.agent.post(url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => response.body_mut().read_json::<Value>().map_err(|e| {
                Attempt::Fatal(ProviderError::InvalidResponse {
                    port: self.port_id.clone(),
                    reason: e.to_string(),
                })
            }),
            401 | 403 => Err(Attempt::Fatal(ProviderError::AuthFailure {
                port: self.port_id.clone(),
            })),
            429 | 500..=599 => Err(Attempt::Retry(format!("status {status}"))),
            _ => {
                let text = response.body_mut().read_to_string().unwrap_or_default();
                Err(Attempt::Fatal(ProviderError::InvalidResponse {
                    port: self.port_id.clone(),
                    reason: format!("status {status}: {text}"),
                }))
            }
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> ProviderError {
        ProviderError::InvalidResponse {
            port: self.port_id.clone(),
            reason: reason.into(),
        }
    }
}

pub struct HttpEmbedder {
    id: String,
    dimension: usize,
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(id: impl Into<String>, dimension: usize, config: EndpointConfig) -> Self {
        let id = id.into();
        Self {
            client: HttpClient::new(id.clone(), config),
            id,
            dimension,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl EmbedderPort for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.client.config.model, "input": texts });
        let raw = self.client.post_json("embeddings", &body)?;
        let parsed: EmbeddingResponse =
            serde_json::from_value(raw).map_err(|e| self.client.invalid(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(self.client.invalid(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in parsed.data.into_iter().enumerate() {
            let slot = item.index.unwrap_or(pos);
            if slot >= out.len() || item.embedding.len() != self.dimension {
                return Err(self.client.invalid(format!(
                    "embedding {slot} has dimension {}, expected {}",
                    item.embedding.len(),
                    self.dimension
                )));
            }
            out[slot] = item.embedding;
        }
        Ok(out)
    }
}

pub struct HttpChat {
    id: String,
    client: HttpClient,
}

impl HttpChat {
    pub fn new(id: impl Into<String>, config: EndpointConfig) -> Self {
        let id = id.into();
        Self {
            client: HttpClient::new(id.clone(), config),
            id,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatPort for HttpChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, params: &ChatParams) -> Result<Completion, ProviderError> {
        let mut body = json!({
            "model": self.client.config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let raw = self.client.post_json("chat/completions", &body)?;
        let parsed: ChatResponse =
            serde_json::from_value(raw).map_err(|e| self.client.invalid(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| self.client.invalid("no choices in response"))?;
        let usage = parsed.usage.unwrap_or(ChatUsage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(Completion {
            text,
            input_tokens: usage.prompt_tokens,
            output_tokens: usage.completion_tokens,
        })
    }
}

pub struct HttpReranker {
    id: String,
    client: HttpClient,
}

impl HttpReranker {
    pub fn new(id: impl Into<String>, config: EndpointConfig) -> Self {
        let id = id.into();
        Self {
            client: HttpClient::new(id.clone(), config),
            id,
        }
    }
}

#[derive(Deserialize)]
struct RerankResponse {
    results: Vec<RerankItem>,
}

#[derive(Deserialize)]
struct RerankItem {
    index: usize,
    relevance_score: f64,
}

impl RerankerPort for HttpReranker {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError> {
        if passages.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({
            "model": self.client.config.model,
            "query": query,
            "documents": passages,
        });
        let raw = self.client.post_json("rerank", &body)?;
        let parsed: RerankResponse =
            serde_json::from_value(raw).map_err(|e| self.client.invalid(e.to_string()))?;
        let mut scores = vec![None; passages.len()];
        for item in parsed.results {
            if item.index >= scores.len() || !item.relevance_score.is_finite() {
                return Err(self.client.invalid(format!("bad rerank result for {}", item.index)));
            }
            scores[item.index] = Some(item.relevance_score);
        }
        scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| self.client.invalid(format!("missing score for passage {i}"))))
            .collect()
    }
}
