use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{fingerprint, ChatModel, ChatRequest, ChatResponse, ProviderError};

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response: ChatResponse,
}

/// Recorded responses keyed by request fingerprint.
///
/// On disk this is UTF-8 JSON lines of [`CassetteEntry`]. When a fingerprint
/// occurs more than once the first entry wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cassette {
    entries: HashMap<String, ChatResponse>,
    order: Vec<String>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| ProviderError::Cassette(format!("cannot open {}: {e}", path.display())))?;
        let mut cassette = Cassette::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ProviderError::Cassette(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Cassette(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            cassette.insert(entry.fingerprint, entry.response);
        }
        Ok(cassette)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProviderError> {
        let mut buf = Vec::new();
        for fp in &self.order {
            let entry = CassetteEntry {
                fingerprint: fp.clone(),
                response: self.entries[fp].clone(),
            };
            serde_json::to_writer(&mut buf, &entry).map_err(|e| ProviderError::Cassette(e.to_string()))?;
            buf.push(b'\n');
        }
        fs::write(path.as_ref(), buf).map_err(|e| ProviderError::Cassette(e.to_string()))
    }

    /// Inserts unless the fingerprint is already present.
    pub fn insert(&mut self, fingerprint: String, response: ChatResponse) -> bool {
        if self.entries.contains_key(&fingerprint) {
            return false;
        }
        self.order.push(fingerprint.clone());
        self.entries.insert(fingerprint, response);
        true
    }

    /// Convenience for building fixtures: records `text` as the answer to `request`.
    pub fn record(&mut self, request: &ChatRequest, text: impl Into<String>) {
        self.insert(
            fingerprint(request),
            ChatResponse {
                text: text.into(),
                provider_name: "cassette".into(),
                latency_ms: 0,
                truncated: false,
            },
        );
    }

    pub fn get(&self, fingerprint: &str) -> Option<&ChatResponse> {
        self.entries.get(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Serves responses from a cassette; never touches the network.
pub struct ReplayProvider {
    cassette: Cassette,
}

impl ReplayProvider {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        Cassette::load(path).map(Self::new)
    }
}

impl ChatModel for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let fp = fingerprint(request);
        self.cassette
            .get(&fp)
            .cloned()
            .ok_or(ProviderError::ReplayMiss { fingerprint: fp })
    }
}

/// Serves known fingerprints from the cassette and records new ones.
///
/// New entries are appended to the cassette file (if any) through a single
/// writer lock, so concurrent callers never interleave lines.
pub struct RecordingProvider {
    inner: Arc<dyn ChatModel>,
    entries: RwLock<Cassette>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl RecordingProvider {
    pub fn in_memory(inner: Arc<dyn ChatModel>) -> Self {
        Self {
            inner,
            entries: RwLock::new(Cassette::new()),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates) a cassette file and records into it.
    pub fn open(inner: Arc<dyn ChatModel>, path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref().to_path_buf();
        let cassette = if path.exists() {
            Cassette::load(&path)?
        } else {
            Cassette::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ProviderError::Cassette(format!("cannot open {}: {e}", path.display())))?;
        Ok(Self {
            inner,
            entries: RwLock::new(cassette),
            writer: Mutex::new(Some((path, file))),
        })
    }

    /// Snapshot of everything recorded or loaded so far.
    pub fn cassette(&self) -> Cassette {
        self.entries.read().expect("cassette lock poisoned").clone()
    }
}

impl ChatModel for RecordingProvider {
    fn name(&self) -> &str {
        "record"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let fp = fingerprint(request);
        if let Some(hit) = self.entries.read().expect("cassette lock poisoned").get(&fp) {
            return Ok(hit.clone());
        }
        let response = self.inner.complete(request)?;

        let mut writer = self.writer.lock().expect("cassette writer poisoned");
        let mut entries = self.entries.write().expect("cassette lock poisoned");
        // Another caller may have recorded the same request meanwhile.
        if let Some(hit) = entries.get(&fp) {
            return Ok(hit.clone());
        }
        if let Some((path, file)) = writer.as_mut() {
            let entry = CassetteEntry {
                fingerprint: fp.clone(),
                response: response.clone(),
            };
            let mut line = serde_json::to_vec(&entry).map_err(|e| ProviderError::Cassette(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)
                .and_then(|_| file.flush())
                .map_err(|e| ProviderError::Cassette(format!("cannot append to {}: {e}", path.display())))?;
        }
        entries.insert(fp, response.clone());
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ChatMessage, ScriptedProvider};

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("sys", vec![ChatMessage::user(text)]).unwrap()
    }

    #[test]
    fn replay_miss_names_fingerprint() {
        let r = req("q");
        let err = ReplayProvider::new(Cassette::new()).complete(&r).unwrap_err();
        assert_eq!(err, ProviderError::ReplayMiss { fingerprint: r.fingerprint() });
    }

    #[test]
    fn record_serves_second_request_from_cassette() {
        let inner = Arc::new(ScriptedProvider::new().with_fallback("answer"));
        let rec = RecordingProvider::in_memory(inner.clone());
        let a = rec.complete(&req("q")).unwrap();
        let b = rec.complete(&req("q")).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(inner.calls(), 1);
    }

    #[test]
    fn recorded_file_replays_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let inner = Arc::new(ScriptedProvider::new().with_responder(|r| Some(format!("echo {}", r.last_text()))));
        let rec = RecordingProvider::open(inner, &path).unwrap();
        let texts: Vec<String> = ["a", "b", "a", "c"]
            .iter()
            .map(|t| rec.complete(&req(t)).unwrap().text)
            .collect();
        drop(rec);

        let replay = ReplayProvider::load(&path).unwrap();
        for (t, expected) in ["a", "b", "a", "c"].iter().zip(&texts) {
            assert_eq!(&replay.complete(&req(t)).unwrap().text, expected);
        }
        assert_eq!(Cassette::load(&path).unwrap().len(), 3);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut c = Cassette::new();
        c.record(&req("x"), "one");
        c.record(&req("y"), "two");
        c.save(&path).unwrap();
        assert_eq!(Cassette::load(&path).unwrap(), c);
    }
}
