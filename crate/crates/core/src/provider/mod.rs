//! Chat-completion and embedding backends.
//!
//! Every agent talks to a [`ChatModel`]. Besides the remote HTTP backend
//! there is a scripted backend and a cassette-based record/replay layer, so
//! the whole pipeline can run offline and reproducibly.

mod cassette;
mod config;
mod embed;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, RecordingProvider, ReplayProvider};
pub use config::{build_chat, build_embedder, ProviderMode, ProviderSettings, ScriptEntry, API_KEY_ENV};
pub use embed::{cosine, Embedder, HashEmbedder};
pub use remote::{
    HttpTransport, RemoteChat, RemoteEmbedder, RemoteSettings, RetryPolicy, Transport, TransportError,
};
pub use scripted::ScriptedProvider;

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl ChatRequest {
    /// Builds a request with the deterministic evaluation defaults
    /// (temperature 0, seed 0).
    pub fn new(system_text: impl Into<String>, messages: Vec<ChatMessage>) -> Result<Self, ProviderError> {
        let req = Self {
            system_text: system_text.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: Some(DEFAULT_SEED),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, ProviderError> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Result<Self, ProviderError> {
        self.max_tokens = max_tokens;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.system_text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("system_text is empty".into()));
        }
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// The last message's text; renderers put the filled prompt there.
    pub fn last_text(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or("")
    }

    /// System text followed by every message, for containment checks.
    pub fn full_text(&self) -> String {
        let mut out = self.system_text.clone();
        for m in &self.messages {
            out.push('\n');
            out.push_str(&m.text);
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// Stable SHA-256 fingerprint of a request, as 64 lowercase hex digits.
///
/// The canonical form is the compact JSON array
/// `["coachsim-request-v1", system_text, [[role, text], ...], temperature, seed]`
/// where `seed` is `null` when absent. `max_tokens` is not part of it.
pub fn fingerprint(request: &ChatRequest) -> String {
    let messages: Vec<(&str, &str)> = request
        .messages
        .iter()
        .map(|m| (m.role.as_str(), m.text.as_str()))
        .collect();
    let canonical = serde_json::to_string(&(
        "coachsim-request-v1",
        &request.system_text,
        messages,
        request.temperature,
        request.seed,
    ))
    .expect("request serialization cannot fail");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub provider_name: String,
    pub latency_ms: u64,
    /// Set when the backend stopped at the token limit.
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("replay miss: no cassette entry for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("scripted provider has no response for fingerprint {fingerprint}")]
    ScriptMiss { fingerprint: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("embedding input {index} is empty")]
    EmptyText { index: usize },
    #[error("provider not configured: {0}")]
    NotConfigured(String),
}

/// A chat-completion backend.
pub trait ChatModel: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Sends a request through any backend.
pub fn complete(provider: &dyn ChatModel, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
    request.validate()?;
    provider.complete(request)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest::new(
            "system",
            vec![ChatMessage::user("hello"), ChatMessage::assistant("hi"), ChatMessage::user("bye")],
        )
        .unwrap()
    }

    #[test]
    fn fingerprint_is_fixed_width_hex() {
        let fp = fingerprint(&request());
        assert_eq!(fp.len(), 64);
        assert!(fp.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn fingerprint_is_pinned() {
        // Guards the canonical form against accidental changes.
        let canonical = r#"["coachsim-request-v1","system",[["user","hello"],["assistant","hi"],["user","bye"]],0.0,0]"#;
        assert_eq!(fingerprint(&request()), hex::encode(Sha256::digest(canonical.as_bytes())));
    }

    #[test]
    fn fingerprint_ignores_max_tokens() {
        let r = request();
        let other = r.clone().with_max_tokens(7).unwrap();
        assert_eq!(fingerprint(&r), fingerprint(&other));
    }

    #[test]
    fn fingerprint_sees_seed_temperature_and_roles() {
        let r = request();
        assert_ne!(fingerprint(&r), fingerprint(&r.clone().with_seed(None)));
        assert_ne!(fingerprint(&r), fingerprint(&r.clone().with_temperature(0.7).unwrap()));
        let mut swapped = r.clone();
        swapped.messages[1].role = ChatRole::User;
        assert_ne!(fingerprint(&r), fingerprint(&swapped));
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new("", vec![ChatMessage::user("x")]).is_err());
        assert!(ChatRequest::new("s", vec![]).is_err());
        assert!(request().with_temperature(2.5).is_err());
        assert!(request().with_max_tokens(0).is_err());
    }
}
