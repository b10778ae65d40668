use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;

use super::{ChatModel, ChatRequest, ChatResponse, ProviderError};

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

enum Rule {
    Contains(String, String),
    /// Regex over the request text; the response is a template that may
    /// refer to capture groups as `$1` or `${name}`.
    Pattern(Regex, String),
}

impl Rule {
    fn answer(&self, haystack: &str) -> Option<String> {
        match self {
            Rule::Contains(needle, text) => haystack.contains(needle.as_str()).then(|| text.clone()),
            Rule::Pattern(re, template) => re.captures(haystack).map(|caps| {
                let mut out = String::new();
                caps.expand(template, &mut out);
                out
            }),
        }
    }
}

/// Deterministic, offline backend.
///
/// Lookup order: exact fingerprint table, then substring and pattern rules in
/// insertion order (matched against the system text and every message), then the
/// responder closure, then the fallback text. Anything else is a
/// [`ProviderError::ScriptMiss`].
pub struct ScriptedProvider {
    name: String,
    exact: HashMap<String, String>,
    rules: Vec<Rule>,
    responder: Option<Responder>,
    fallback: Option<String>,
    calls: AtomicUsize,
}

impl Default for ScriptedProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self {
            name: "scripted".into(),
            exact: HashMap::new(),
            rules: Vec::new(),
            responder: None,
            fallback: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Answers `text` to requests with exactly this fingerprint.
    pub fn with_exact(mut self, fingerprint: impl Into<String>, text: impl Into<String>) -> Self {
        self.exact.insert(fingerprint.into(), text.into());
        self
    }

    /// Answers `text` to the given request.
    pub fn with_request(self, request: &ChatRequest, text: impl Into<String>) -> Self {
        let fp = request.fingerprint();
        self.with_exact(fp, text)
    }

    /// Answers `text` whenever the request contains `needle`.
    pub fn with_rule(mut self, needle: impl Into<String>, text: impl Into<String>) -> Self {
        self.rules.push(Rule::Contains(needle.into(), text.into()));
        self
    }

    /// Answers the expanded `template` whenever `pattern` matches the request.
    pub fn with_pattern(mut self, pattern: &str, template: impl Into<String>) -> Result<Self, ProviderError> {
        let re = Regex::new(pattern).map_err(|e| ProviderError::NotConfigured(format!("script pattern: {e}")))?;
        self.rules.push(Rule::Pattern(re, template.into()));
        Ok(self)
    }

    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.responder = Some(Box::new(f));
        self
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    /// Number of requests answered or rejected so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let fp = request.fingerprint();
        if let Some(text) = self.exact.get(&fp) {
            return Ok(text.clone());
        }
        if !self.rules.is_empty() {
            let haystack = request.full_text();
            if let Some(text) = self.rules.iter().find_map(|rule| rule.answer(&haystack)) {
                return Ok(text);
            }
        }
        if let Some(text) = self.responder.as_ref().and_then(|f| f(request)) {
            return Ok(text);
        }
        self.fallback
            .clone()
            .ok_or(ProviderError::ScriptMiss { fingerprint: fp })
    }
}

impl ChatModel for ScriptedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self.lookup(request)?;
        Ok(ChatResponse {
            text,
            provider_name: self.name.clone(),
            latency_ms: 0,
            truncated: false,
        })
    }
}
