use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::embed::{check_inputs, normalize, Embedder};
use super::{ChatModel, ChatRequest, ChatResponse, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("cannot decode response: {0}")]
    Decode(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Connect(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

/// Sends one JSON POST. Swappable so tests can inject failures.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(url);
        if let Some(key) = bearer {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError::Connect(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportError::Status { status, body });
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// Retries transient failures with exponential backoff.
///
/// The default allows 3 retries after the first attempt, waiting
/// 0.5 s, 1 s and 2 s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay_ms: 0,
        }
    }

    /// Wait before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << retry.min(20)))
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, TransportError>) -> Result<T, ProviderError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match op() {
                Ok(v) => return Ok(v),
                Err(TransportError::Status { status, body }) if status == 401 || status == 403 => {
                    return Err(ProviderError::Auth(format!("HTTP {status}: {body}")));
                }
                Err(e) if e.is_transient() && attempts <= self.max_retries => {
                    let wait = self.delay(attempts - 1);
                    tracing::warn!(attempt = attempts, ?wait, error = %e, "transient provider failure, retrying");
                    std::thread::sleep(wait);
                }
                Err(e) if e.is_transient() => {
                    return Err(ProviderError::Transport {
                        attempts,
                        message: e.to_string(),
                    })
                }
                Err(e) => return Err(ProviderError::InvalidResponse(e.to_string())),
            }
        }
    }
}

/// Endpoint settings for an OpenAI-compatible chat/embedding API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl RemoteSettings {
    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.endpoint.trim_end_matches('/'), path)
    }
}

pub struct RemoteChat {
    settings: RemoteSettings,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl RemoteChat {
    pub fn new(settings: RemoteSettings, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        Self {
            settings,
            transport,
            retry,
        }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_text})];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.text})),
        );
        let mut body = json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl ChatModel for RemoteChat {
    fn name(&self) -> &str {
        &self.settings.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let url = self.settings.url("chat/completions");
        let body = self.body(request);
        let started = Instant::now();
        let value = self
            .retry
            .run(|| self.transport.post_json(&url, self.settings.api_key.as_deref(), &body))?;
        let choice = value
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| ProviderError::InvalidResponse("response has no choices".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
        if text.is_empty() && !truncated {
            return Err(ProviderError::InvalidResponse("empty completion".into()));
        }
        Ok(ChatResponse {
            text,
            provider_name: self.settings.model.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            truncated,
        })
    }
}

pub struct RemoteEmbedder {
    settings: RemoteSettings,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    dimension: std::sync::OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(settings: RemoteSettings, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        Self {
            settings,
            transport,
            retry,
            dimension: std::sync::OnceLock::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        self.settings.embedding_model.as_deref().unwrap_or("remote-embedding")
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension.get().copied()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        check_inputs(texts)?;
        let model = self
            .settings
            .embedding_model
            .as_deref()
            .ok_or_else(|| ProviderError::NotConfigured("embedding_model".into()))?;
        let url = self.settings.url("embeddings");
        let body = json!({"model": model, "input": texts});
        let value = self
            .retry
            .run(|| self.transport.post_json(&url, self.settings.api_key.as_deref(), &body))?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::InvalidResponse("response has no data".into()))?;
        if data.len() != texts.len() {
            return Err(ProviderError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let v: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::InvalidResponse("item has no embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| ProviderError::InvalidResponse("non-numeric embedding".into())))
                .collect::<Result<_, _>>()?;
            let dim = *self.dimension.get_or_init(|| v.len());
            if v.len() != dim {
                return Err(ProviderError::InvalidResponse(format!(
                    "embedding dimension {} differs from {dim}",
                    v.len()
                )));
            }
            out.push(normalize(v).ok_or_else(|| ProviderError::InvalidResponse("zero embedding".into()))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ChatMessage;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    /// Fails `failures` times with the given error, then answers `reply`.
    struct FlakyTransport {
        failures: u32,
        error: TransportError,
        reply: Value,
        calls: AtomicU32,
        last_body: Mutex<Option<Value>>,
    }

    impl Transport for FlakyTransport {
        fn post_json(&self, _url: &str, _bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
            *self.last_body.lock().unwrap() = Some(body.clone());
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(self.reply.clone())
            }
        }
    }

    fn settings() -> RemoteSettings {
        RemoteSettings {
            endpoint: "http://localhost:1/v1/".into(),
            model: "test-model".into(),
            embedding_model: Some("embed".into()),
            api_key: Some("k".into()),
        }
    }

    fn flaky(failures: u32, error: TransportError) -> Arc<FlakyTransport> {
        Arc::new(FlakyTransport {
            failures,
            error,
            reply: json!({"choices": [{"message": {"content": "fine"}, "finish_reason": "stop"}]}),
            calls: AtomicU32::new(0),
            last_body: Mutex::new(None),
        })
    }

    fn request() -> ChatRequest {
        ChatRequest::new("sys", vec![ChatMessage::user("hi")]).unwrap()
    }

    #[test]
    fn default_backoff_schedule() {
        let p = RetryPolicy::default();
        let delays: Vec<u128> = (0..3).map(|i| p.delay(i).as_millis()).collect();
        assert_eq!(delays, vec![500, 1000, 2000]);
    }

    #[test]
    fn transient_failures_are_retried() {
        let t = flaky(2, TransportError::Connect("reset".into()));
        let chat = RemoteChat::new(settings(), t.clone(), RetryPolicy::no_delay(3));
        assert_eq!(chat.complete(&request()).unwrap().text, "fine");
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);
        let body = t.last_body.lock().unwrap().clone().unwrap();
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["seed"], 0);
    }

    #[test]
    fn gives_up_after_configured_retries() {
        let t = flaky(10, TransportError::Status { status: 503, body: "busy".into() });
        let chat = RemoteChat::new(settings(), t.clone(), RetryPolicy::no_delay(3));
        match chat.complete(&request()).unwrap_err() {
            ProviderError::Transport { attempts, .. } => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let t = flaky(10, TransportError::Status { status: 401, body: "nope".into() });
        let chat = RemoteChat::new(settings(), t.clone(), RetryPolicy::no_delay(3));
        assert!(matches!(chat.complete(&request()), Err(ProviderError::Auth(_))));
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn embeddings_are_normalized() {
        let t = Arc::new(FlakyTransport {
            failures: 0,
            error: TransportError::Connect(String::new()),
            reply: json!({"data": [{"embedding": [3.0, 4.0]}]}),
            calls: AtomicU32::new(0),
            last_body: Mutex::new(None),
        });
        let e = RemoteEmbedder::new(settings(), t, RetryPolicy::no_delay(0));
        let v = e.embed(&["abc"]).unwrap();
        assert!((v[0][0] - 0.6).abs() < 1e-12 && (v[0][1] - 0.8).abs() < 1e-12);
        assert_eq!(e.dimension(), Some(2));
    }
}
