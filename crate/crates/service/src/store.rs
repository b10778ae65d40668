//! Append-only session persistence.
//!
//! `index.jsonl` gets one line per created session. Each session has its own
//! log under `sessions/<id>.jsonl` with a `created` event, one `turn` event
//! per completed exchange (all three utterances in a single line) and an
//! optional `closed` event. A line is only ever appended whole, so a crash
//! can at worst leave a torn final line, which recovery drops.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use coachsim_core::model::{DialogueHistory, Utterance};
use coachsim_core::prompting::StrategyKind;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::manager::{Session, SessionStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub scenario_id: String,
    pub strategy: StrategyKind,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Created(IndexEntry),
    Turn { utterances: Vec<Utterance> },
    Closed { at: u64 },
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<(), ServiceError> {
    let mut line = serde_json::to_string(value).map_err(|e| ServiceError::Storage(e.to_string()))?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Complete lines of a JSONL file; a final line without its newline is a
/// torn write and is skipped.
fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ServiceError> {
    let mut out = Vec::new();
    let mut reader = BufReader::new(File::open(path)?);
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            tracing::warn!(path = %path.display(), line = line_no, "dropping torn final line");
            break;
        }
        if buf.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(buf.trim_end())
            .map_err(|e| ServiceError::Storage(format!("{}:{line_no}: {e}", path.display())))?;
        out.push(item);
    }
    Ok(out)
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.jsonl")
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.jsonl"))
    }

    pub fn record_created(&self, entry: &IndexEntry) -> Result<(), ServiceError> {
        append_line(&self.log_path(&entry.session_id), &LogEvent::Created(entry.clone()))?;
        append_line(&self.index_path(), entry)
    }

    pub fn record_turn(&self, session_id: &str, utterances: &[Utterance]) -> Result<(), ServiceError> {
        append_line(
            &self.log_path(session_id),
            &LogEvent::Turn {
                utterances: utterances.to_vec(),
            },
        )
    }

    pub fn record_closed(&self, session_id: &str, at: u64) -> Result<(), ServiceError> {
        append_line(&self.log_path(session_id), &LogEvent::Closed { at })
    }

    /// Rebuilds every indexed session from its log.
    pub fn load_all(&self) -> Result<Vec<Session>, ServiceError> {
        let index = self.index_path();
        if !index.exists() {
            return Ok(Vec::new());
        }
        let entries: Vec<IndexEntry> = read_lines(&index)?;
        let mut sessions = Vec::with_capacity(entries.len());
        for entry in entries {
            sessions.push(self.load_session(entry)?);
        }
        Ok(sessions)
    }

    fn load_session(&self, entry: IndexEntry) -> Result<Session, ServiceError> {
        let path = self.log_path(&entry.session_id);
        let events: Vec<LogEvent> = read_lines(&path)?;
        let mut turns: Vec<Utterance> = Vec::new();
        let mut status = SessionStatus::Active;
        for event in events {
            match event {
                LogEvent::Created(_) => {}
                LogEvent::Turn { utterances } => turns.extend(utterances),
                LogEvent::Closed { .. } => status = SessionStatus::Closed,
            }
        }
        let history = DialogueHistory::from_turns(turns)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display())))?;
        Ok(Session {
            session_id: entry.session_id,
            scenario_id: entry.scenario_id,
            strategy: entry.strategy,
            history,
            status,
            created_at: entry.created_at,
        })
    }
}
