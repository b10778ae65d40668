//! Domain types for scenarios, conversations and the disease knowledge base.
//!
//! Everything here is a plain value type. The only mutation is
//! [`DialogueHistory::append`], which assigns consecutive turn indices.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current wall-clock time in milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// One disease description from the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseEntry {
    pub disease_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub diagnostic_tests: Vec<String>,
    #[serde(default)]
    pub treatments: Vec<String>,
    #[serde(default)]
    pub medications: Vec<String>,
}

impl DiseaseEntry {
    /// Returns a description of the first invariant this entry violates.
    pub fn check(&self) -> Result<(), String> {
        if self.disease_id.trim().is_empty() {
            return Err("disease_id is empty".into());
        }
        if self.name.trim().is_empty() {
            return Err(format!("disease {:?} has an empty name", self.disease_id));
        }
        if self.symptoms.is_empty() && self.treatments.is_empty() && self.medications.is_empty() {
            return Err(format!(
                "disease {:?} lists no symptoms, treatments or medications",
                self.disease_id
            ));
        }
        Ok(())
    }

    /// Terms a learner could misuse for the given error category.
    ///
    /// Conditions cover both the disease name and its symptoms.
    pub fn terms_for(&self, category: ErrorCategory) -> Vec<&str> {
        match category {
            ErrorCategory::Condition => std::iter::once(self.name.as_str())
                .chain(self.symptoms.iter().map(String::as_str))
                .collect(),
            ErrorCategory::Medication => self.medications.iter().map(String::as_str).collect(),
            ErrorCategory::Treatment => self.treatments.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeBaseError {
    #[error("cannot read knowledge base {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate disease_id {id:?}")]
    DuplicateId { line: usize, id: String },
}

/// Disease entries keyed by id, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: IndexMap<String, DiseaseEntry>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an entry, rejecting invariant violations and duplicate ids.
    pub fn insert(&mut self, entry: DiseaseEntry) -> Result<(), String> {
        entry.check()?;
        if self.entries.contains_key(&entry.disease_id) {
            return Err(format!("duplicate disease_id {:?}", entry.disease_id));
        }
        self.entries.insert(entry.disease_id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&DiseaseEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &DiseaseEntry> {
        self.entries.values()
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, KnowledgeBaseError> {
        let mut kb = KnowledgeBase::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| KnowledgeBaseError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: DiseaseEntry =
                serde_json::from_str(&line).map_err(|e| KnowledgeBaseError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if kb.contains(&entry.disease_id) {
                return Err(KnowledgeBaseError::DuplicateId {
                    line: line_no,
                    id: entry.disease_id,
                });
            }
            kb.insert(entry).map_err(|message| KnowledgeBaseError::Malformed {
                line: line_no,
                message,
            })?;
        }
        Ok(kb)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in self.entries.values() {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Loads a line-delimited knowledge base file.
pub fn load_knowledge_base(path: impl AsRef<Path>) -> Result<KnowledgeBase, KnowledgeBaseError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| KnowledgeBaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    KnowledgeBase::from_reader(file)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub profile_id: String,
    pub age: u32,
    #[serde(default)]
    pub persona: String,
    pub presenting_complaint: String,
}

impl PatientProfile {
    /// One-line summary used when listing scenarios.
    pub fn summary(&self) -> String {
        let mut s = format!("{}-year-old", self.age);
        if !self.persona.trim().is_empty() {
            s.push_str(&format!(" {}", self.persona.trim()));
        }
        s.push_str(&format!(": {}", self.presenting_complaint.trim()));
        s
    }
}

/// A patient profile paired with the diseases that ground the consultation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub profile: PatientProfile,
    pub disease_ids: Vec<String>,
}

/// Loads a line-delimited scenario file, one [`Scenario`] per line.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, DatasetError> {
    read_jsonl(path.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Learner,
    Patient,
    Coach,
    DoctorAgent,
}

impl Role {
    /// Learner and doctor_agent turns both count as the doctor's statement.
    pub fn is_doctor(self) -> bool {
        matches!(self, Role::Learner | Role::DoctorAgent)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Learner => "learner",
            Role::Patient => "patient",
            Role::Coach => "coach",
            Role::DoctorAgent => "doctor_agent",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub role: Role,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl Utterance {
    /// Equality ignoring the timestamp.
    pub fn same_content(&self, other: &Utterance) -> bool {
        self.index == other.index && self.role == other.role && self.text == other.text
    }
}

/// Ordered dialogue turns. Append is the only mutation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialogueHistory {
    turns: Vec<Utterance>,
}

impl DialogueHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a history from stored turns, checking index continuity.
    pub fn from_turns(turns: Vec<Utterance>) -> Result<Self, String> {
        for (i, t) in turns.iter().enumerate() {
            if t.index != i {
                return Err(format!("turn at position {i} has index {}", t.index));
            }
        }
        Ok(Self { turns })
    }

    /// Appends a turn with the next index and returns a reference to it.
    pub fn append(&mut self, role: Role, text: impl Into<String>, timestamp: u64) -> &Utterance {
        let index = self.turns.len();
        self.turns.push(Utterance {
            index,
            role,
            text: text.into(),
            timestamp,
        });
        &self.turns[index]
    }

    /// The utterance that would be appended next, without appending it.
    pub fn next_utterance(&self, role: Role, text: impl Into<String>, timestamp: u64) -> Utterance {
        Utterance {
            index: self.turns.len(),
            role,
            text: text.into(),
            timestamp,
        }
    }

    pub fn turns(&self) -> &[Utterance] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn into_turns(self) -> Vec<Utterance> {
        self.turns
    }
}

/// Returns the turns whose role is not excluded, in their original order.
///
/// The result is a view: utterances keep their original indices, so a
/// filtered history does not satisfy the consecutive-index invariant.
pub fn filtered_history(history: &DialogueHistory, excluded_roles: &HashSet<Role>) -> DialogueHistory {
    DialogueHistory {
        turns: history
            .turns
            .iter()
            .filter(|t| !excluded_roles.contains(&t.role))
            .cloned()
            .collect(),
    }
}

/// The patient's view of the dialogue: everything except coach turns.
pub fn coach_excluded(history: &DialogueHistory) -> DialogueHistory {
    filtered_history(history, &HashSet::from([Role::Coach]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Condition,
    Medication,
    Treatment,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [
        ErrorCategory::Condition,
        ErrorCategory::Medication,
        ErrorCategory::Treatment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Condition => "condition",
            ErrorCategory::Medication => "medication",
            ErrorCategory::Treatment => "treatment",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A gold terminology error on one doctor turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub turn_index: usize,
    pub category: ErrorCategory,
    pub incorrect_term: String,
    pub correct_term: String,
    #[serde(default)]
    pub reference_feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conversation_id: String,
    pub scenario: Scenario,
    pub turns: Vec<Utterance>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl ConversationRecord {
    pub fn annotations_for(&self, turn_index: usize) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.turn_index == turn_index)
    }
}

/// Renders the labelled medical-context block for a scenario's diseases.
///
/// Diseases appear in `disease_ids` order, separated by a blank line. The
/// section labels are fixed so rendered prompts are reproducible.
pub fn assemble_medical_context(scenario: &Scenario, kb: &KnowledgeBase) -> Result<String, UnknownDisease> {
    let mut blocks = Vec::with_capacity(scenario.disease_ids.len());
    for id in &scenario.disease_ids {
        let entry = kb.get(id).ok_or_else(|| UnknownDisease(id.clone()))?;
        blocks.push(render_disease(entry));
    }
    Ok(blocks.join("\n\n"))
}

fn render_disease(entry: &DiseaseEntry) -> String {
    fn list(items: &[String]) -> String {
        if items.is_empty() {
            "-".to_string()
        } else {
            items.join("; ")
        }
    }
    let mut out = format!("Name: {}\n", entry.name);
    if !entry.description.trim().is_empty() {
        out.push_str(&format!("Description: {}\n", entry.description.trim()));
    }
    out.push_str(&format!("Symptoms: {}\n", list(&entry.symptoms)));
    out.push_str(&format!("Tests: {}\n", list(&entry.diagnostic_tests)));
    out.push_str(&format!("Treatments: {}\n", list(&entry.treatments)));
    out.push_str(&format!("Medications: {}", list(&entry.medications)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("disease id {0:?} is not in the knowledge base")]
pub struct UnknownDisease(pub String);

/// One invariant violation found in a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Checks record invariants that do not need the knowledge base.
pub fn validate_conversation_structure(record: &ConversationRecord) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if record.conversation_id.trim().is_empty() {
        diags.push(Diagnostic::new("conversation_id", "empty"));
    }
    let sc = &record.scenario;
    if sc.profile.presenting_complaint.trim().is_empty() {
        diags.push(Diagnostic::new("scenario.profile.presenting_complaint", "empty"));
    }
    if sc.disease_ids.is_empty() {
        diags.push(Diagnostic::new("scenario.disease_ids", "empty"));
    }
    for (i, turn) in record.turns.iter().enumerate() {
        if turn.index != i {
            diags.push(Diagnostic::new(
                format!("turns[{i}].index"),
                format!("expected {i}, found {}", turn.index),
            ));
        }
        if turn.text.trim().is_empty() {
            diags.push(Diagnostic::new(format!("turns[{i}].text"), "empty"));
        }
    }
    for (i, ann) in record.annotations.iter().enumerate() {
        let path = format!("annotations[{i}]");
        match record.turns.get(ann.turn_index) {
            None => diags.push(Diagnostic::new(
                format!("{path}.turn_index"),
                format!("turn_index {} is out of range", ann.turn_index),
            )),
            Some(turn) if !turn.role.is_doctor() => diags.push(Diagnostic::new(
                format!("{path}.turn_index"),
                format!(
                    "turn_index {} points at a {} turn, expected learner or doctor_agent",
                    ann.turn_index, turn.role
                ),
            )),
            Some(_) => {}
        }
        if ann.incorrect_term.trim().is_empty() || ann.correct_term.trim().is_empty() {
            diags.push(Diagnostic::new(path, "incorrect_term and correct_term must be nonempty"));
        } else if ann.incorrect_term == ann.correct_term {
            diags.push(Diagnostic::new(
                path,
                format!("incorrect_term equals correct_term ({:?})", ann.correct_term),
            ));
        }
    }
    diags
}

/// Checks all record invariants, including disease resolution.
pub fn validate_conversation(record: &ConversationRecord, kb: &KnowledgeBase) -> Vec<Diagnostic> {
    let mut diags = validate_conversation_structure(record);
    for (i, id) in record.scenario.disease_ids.iter().enumerate() {
        if !kb.contains(id) {
            diags.push(Diagnostic::new(
                format!("scenario.disease_ids[{i}]"),
                format!("{id:?} does not resolve"),
            ));
        }
    }
    diags
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

/// Reads a line-delimited JSON file; blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| io_err(e.into()))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ConversationRecord>, DatasetError> {
    read_jsonl(path.as_ref())
}
