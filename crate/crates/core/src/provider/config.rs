use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ChatModel, Embedder, HashEmbedder, ProviderError, RecordingProvider, RemoteChat, RemoteEmbedder,
    RemoteSettings, ReplayProvider, RetryPolicy, ScriptedProvider, Transport,
};
use crate::model::read_jsonl;

/// Environment variable that overrides the configured API key.
pub const API_KEY_ENV: &str = "COACHSIM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Remote,
    #[default]
    Scripted,
    Replay,
    /// Remote (or scripted, when a script is set) backend whose responses
    /// are appended to the cassette.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

/// One line of a script file. `pattern` is a regex whose capture groups the
/// response may use (`$1`, `${name}`). An entry with none of `fingerprint`,
/// `contains` or `pattern` is the fallback answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub mode: ProviderMode,
    pub remote: Option<RemoteSettings>,
    pub cassette: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub embedder: EmbedderKind,
    pub embedding_dimension: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            mode: ProviderMode::default(),
            remote: None,
            cassette: None,
            script: None,
            retry: RetryPolicy::default(),
            embedder: EmbedderKind::default(),
            embedding_dimension: HashEmbedder::DEFAULT_DIMENSION,
        }
    }
}

impl ProviderSettings {
    fn remote_settings(&self) -> Result<RemoteSettings, ProviderError> {
        let mut remote = self
            .remote
            .clone()
            .ok_or_else(|| ProviderError::NotConfigured("remote endpoint settings".into()))?;
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.trim().is_empty() {
                remote.api_key = Some(key);
            }
        }
        Ok(remote)
    }

    fn cassette_path(&self) -> Result<&Path, ProviderError> {
        self.cassette
            .as_deref()
            .ok_or_else(|| ProviderError::NotConfigured("cassette path".into()))
    }
}

fn load_script(path: &Path) -> Result<ScriptedProvider, ProviderError> {
    let entries: Vec<ScriptEntry> =
        read_jsonl(path).map_err(|e| ProviderError::NotConfigured(format!("script: {e}")))?;
    let mut provider = ScriptedProvider::new();
    for entry in entries {
        provider = match (entry.fingerprint, entry.contains, entry.pattern) {
            (Some(fp), _, _) => provider.with_exact(fp, entry.response),
            (None, Some(needle), _) => provider.with_rule(needle, entry.response),
            (None, None, Some(pattern)) => provider.with_pattern(&pattern, entry.response)?,
            (None, None, None) => provider.with_fallback(entry.response),
        };
    }
    Ok(provider)
}

/// Builds the chat backend described by `settings`.
///
/// `transport` is only used by the remote mode and by record mode without a
/// script.
pub fn build_chat(settings: &ProviderSettings, transport: Arc<dyn Transport>) -> Result<Arc<dyn ChatModel>, ProviderError> {
    Ok(match settings.mode {
        ProviderMode::Scripted => {
            let path = settings
                .script
                .as_deref()
                .ok_or_else(|| ProviderError::NotConfigured("script path".into()))?;
            Arc::new(load_script(path)?)
        }
        ProviderMode::Replay => Arc::new(ReplayProvider::load(settings.cassette_path()?)?),
        ProviderMode::Remote => Arc::new(RemoteChat::new(settings.remote_settings()?, transport, settings.retry)),
        ProviderMode::Record => {
            // A configured script takes the place of the remote backend, which
            // lets fixture cassettes be recorded offline.
            let inner: Arc<dyn ChatModel> = match settings.script.as_deref() {
                Some(path) => Arc::new(load_script(path)?),
                None => Arc::new(RemoteChat::new(settings.remote_settings()?, transport, settings.retry)),
            };
            Arc::new(RecordingProvider::open(inner, settings.cassette_path()?)?)
        }
    })
}

pub fn build_embedder(settings: &ProviderSettings, transport: Arc<dyn Transport>) -> Result<Arc<dyn Embedder>, ProviderError> {
    Ok(match settings.embedder {
        EmbedderKind::Hash => Arc::new(HashEmbedder::new(settings.embedding_dimension.max(1))),
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(settings.remote_settings()?, transport, settings.retry)),
    })
}
