use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use coachsim_core::agents::{CoachAgent, CoachFeedback, PatientAgent};
use coachsim_core::model::{
    assemble_medical_context, ConversationRecord, DialogueHistory, KnowledgeBase, Role, Scenario, Utterance,
};
use coachsim_core::prompting::{Exemplar, PromptArtifact, StrategyKind};
use coachsim_core::provider::ChatModel;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::store::{IndexEntry, SessionStore};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        coachsim_core::model::now_ms()
    }
}

/// Deterministic clock: starts at `start` and advances by `step` per read.
#[derive(Debug)]
pub struct StepClock {
    next: AtomicU64,
    step: u64,
}

impl StepClock {
    pub fn new(start: u64, step: u64) -> Self {
        Self {
            next: AtomicU64::new(start),
            step,
        }
    }
}

impl Clock for StepClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> String;
}

#[derive(Debug, Default)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> String {
        uuid::Uuid::new_v4().simple().to_string()
    }
}

/// `prefix-000001`, `prefix-000002`, ...
#[derive(Debug)]
pub struct SequentialIds {
    prefix: String,
    next: AtomicU64,
}

impl SequentialIds {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
            next: AtomicU64::new(1),
        }
    }
}

impl IdSource for SequentialIds {
    fn next_id(&self) -> String {
        format!("{}-{:06}", self.prefix, self.next.fetch_add(1, Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub scenario_id: String,
    pub strategy: StrategyKind,
    pub history: DialogueHistory,
    pub status: SessionStatus,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub scenario_id: String,
    pub strategy: StrategyKind,
    pub status: SessionStatus,
    pub created_at: u64,
    pub turns: usize,
}

impl Session {
    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.session_id.clone(),
            scenario_id: self.scenario_id.clone(),
            strategy: self.strategy,
            status: self.status,
            created_at: self.created_at,
            turns: self.history.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario_id: String,
    pub summary: String,
    pub presenting_complaint: String,
    pub age: u32,
    pub disease_ids: Vec<String>,
}

/// Result of one exchange: the learner turn as stored, the patient reply and
/// the coach feedback bound to the learner turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnResult {
    pub learner: Utterance,
    pub patient: Utterance,
    pub coach: CoachFeedback,
}

struct SessionSlot {
    state: Mutex<Session>,
    busy: AtomicBool,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// Static inputs of the service.
pub struct ServiceSetup {
    pub kb: KnowledgeBase,
    pub scenarios: Vec<Scenario>,
    pub artifact: Option<PromptArtifact>,
    pub exemplars: Vec<Exemplar>,
    pub patient_provider: Arc<dyn ChatModel>,
    pub coach_provider: Arc<dyn ChatModel>,
    pub store: Option<SessionStore>,
}

/// Owns all live sessions. Every mutation of one session happens under its
/// own lock; agent calls run outside it, guarded by a per-session busy flag.
pub struct SessionManager {
    kb: KnowledgeBase,
    scenarios: Vec<Scenario>,
    artifact: Option<PromptArtifact>,
    exemplars: Vec<Exemplar>,
    patient_provider: Arc<dyn ChatModel>,
    coach_provider: Arc<dyn ChatModel>,
    patient: PatientAgent,
    store: Option<SessionStore>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
}

impl SessionManager {
    pub fn new(setup: ServiceSetup) -> Result<Self, ServiceError> {
        let mut seen = std::collections::HashSet::new();
        for s in &setup.scenarios {
            if !seen.insert(s.scenario_id.as_str()) {
                return Err(ServiceError::Config(format!("duplicate scenario id {:?}", s.scenario_id)));
            }
            assemble_medical_context(s, &setup.kb)
                .map_err(|e| ServiceError::Config(format!("scenario {:?}: {e}", s.scenario_id)))?;
        }
        let manager = Self {
            kb: setup.kb,
            scenarios: setup.scenarios,
            artifact: setup.artifact,
            exemplars: setup.exemplars,
            patient_provider: setup.patient_provider,
            coach_provider: setup.coach_provider,
            patient: PatientAgent::default(),
            store: setup.store,
            sessions: RwLock::new(HashMap::new()),
            clock: Arc::new(SystemClock),
            ids: Arc::new(RandomIds),
        };
        manager.recover()?;
        Ok(manager)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn with_patient_agent(mut self, patient: PatientAgent) -> Self {
        self.patient = patient;
        self
    }

    fn recover(&self) -> Result<(), ServiceError> {
        let Some(store) = &self.store else {
            return Ok(());
        };
        let sessions = store.load_all()?;
        let n = sessions.len();
        let mut map = self.sessions.write().expect("session map poisoned");
        for s in sessions {
            map.insert(
                s.session_id.clone(),
                Arc::new(SessionSlot {
                    state: Mutex::new(s),
                    busy: AtomicBool::new(false),
                }),
            );
        }
        if n > 0 {
            tracing::info!(sessions = n, root = %store.root().display(), "recovered sessions");
        }
        Ok(())
    }

    fn scenario(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.scenario_id == id)
    }

    fn slot(&self, session_id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::unknown_session(session_id))
    }

    fn coach_for(&self, strategy: StrategyKind) -> Result<CoachAgent, ServiceError> {
        let mut coach = CoachAgent::new(strategy);
        match strategy {
            StrategyKind::Gcot => {
                let artifact = self
                    .artifact
                    .clone()
                    .ok_or_else(|| ServiceError::Precondition("gcot strategy needs a prompt artifact, none is loaded".into()))?;
                coach = coach.with_artifact(artifact);
            }
            StrategyKind::VanillaCot => {
                if self.exemplars.is_empty() {
                    return Err(ServiceError::Precondition(
                        "vanilla_cot strategy needs exemplars, none are loaded".into(),
                    ));
                }
                coach = coach.with_exemplars(self.exemplars.clone());
            }
            StrategyKind::Instruction | StrategyKind::ZeroShotCot => {}
        }
        Ok(coach)
    }

    /// Scenarios in file order.
    pub fn list_scenarios(&self) -> Vec<ScenarioSummary> {
        self.scenarios
            .iter()
            .map(|s| ScenarioSummary {
                scenario_id: s.scenario_id.clone(),
                summary: s.profile.summary(),
                presenting_complaint: s.profile.presenting_complaint.clone(),
                age: s.profile.age,
                disease_ids: s.disease_ids.clone(),
            })
            .collect()
    }

    pub fn create_session(&self, scenario_id: &str, strategy: StrategyKind) -> Result<SessionSummary, ServiceError> {
        if self.scenario(scenario_id).is_none() {
            return Err(ServiceError::NotFound {
                what: "scenario",
                id: scenario_id.to_string(),
            });
        }
        self.coach_for(strategy)?;
        let session = Session {
            session_id: self.ids.next_id(),
            scenario_id: scenario_id.to_string(),
            strategy,
            history: DialogueHistory::new(),
            status: SessionStatus::Active,
            created_at: self.clock.now_ms(),
        };
        if let Some(store) = &self.store {
            store.record_created(&IndexEntry {
                session_id: session.session_id.clone(),
                scenario_id: session.scenario_id.clone(),
                strategy,
                created_at: session.created_at,
            })?;
        }
        let summary = session.summary();
        let mut map = self.sessions.write().expect("session map poisoned");
        if map.contains_key(&session.session_id) {
            return Err(ServiceError::Config(format!("id source repeated {:?}", session.session_id)));
        }
        map.insert(
            session.session_id.clone(),
            Arc::new(SessionSlot {
                state: Mutex::new(session),
                busy: AtomicBool::new(false),
            }),
        );
        tracing::info!(session = %summary.session_id, scenario = scenario_id, %strategy, "session created");
        Ok(summary)
    }

    /// Appends the learner utterance, the patient reply and the coach
    /// feedback, or nothing at all when any step fails.
    pub fn post_utterance(&self, session_id: &str, text: &str) -> Result<TurnResult, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::InvalidInput("utterance text is empty".into()));
        }
        let slot = self.slot(session_id)?;
        if slot
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(ServiceError::Busy(session_id.to_string()));
        }
        let _guard = BusyGuard(&slot.busy);

        let (mut history, scenario_id, strategy) = {
            let s = slot.state.lock().expect("session poisoned");
            if s.status == SessionStatus::Closed {
                return Err(ServiceError::Closed(session_id.to_string()));
            }
            (s.history.clone(), s.scenario_id.clone(), s.strategy)
        };
        let scenario = self
            .scenario(&scenario_id)
            .ok_or_else(|| ServiceError::Config(format!("session refers to unknown scenario {scenario_id:?}")))?;
        let coach = self.coach_for(strategy)?;

        history.append(Role::Learner, text, self.clock.now_ms());
        let learner = history.turns().last().expect("just appended").clone();

        let (patient, feedback) = std::thread::scope(|scope| {
            let patient = scope.spawn(|| {
                self.patient
                    .respond(self.patient_provider.as_ref(), scenario, &learner, &history)
            });
            let feedback = coach.feedback(self.coach_provider.as_ref(), scenario, &self.kb, &learner, &history);
            (patient.join().expect("patient agent panicked"), feedback)
        });
        let patient = patient?;
        let feedback = feedback?;

        let patient = Utterance {
            index: learner.index + 1,
            role: Role::Patient,
            text: patient.text,
            timestamp: self.clock.now_ms(),
        };
        let coach_turn = Utterance {
            index: learner.index + 2,
            role: Role::Coach,
            text: feedback.text.clone(),
            timestamp: self.clock.now_ms(),
        };

        let mut state = slot.state.lock().expect("session poisoned");
        if state.status == SessionStatus::Closed {
            return Err(ServiceError::Closed(session_id.to_string()));
        }
        if state.history.len() != learner.index {
            return Err(ServiceError::Busy(session_id.to_string()));
        }
        let turn = [learner.clone(), patient.clone(), coach_turn];
        if let Some(store) = &self.store {
            store.record_turn(session_id, &turn)?;
        }
        for u in turn {
            state.history.append(u.role, u.text, u.timestamp);
        }
        Ok(TurnResult {
            learner,
            patient,
            coach: feedback,
        })
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ServiceError> {
        Ok(self.slot(session_id)?.state.lock().expect("session poisoned").clone())
    }

    /// The session as a dataset record (no annotations).
    pub fn get_transcript(&self, session_id: &str) -> Result<ConversationRecord, ServiceError> {
        let session = self.session(session_id)?;
        let scenario = self
            .scenario(&session.scenario_id)
            .cloned()
            .ok_or_else(|| ServiceError::Config(format!("unknown scenario {:?}", session.scenario_id)))?;
        Ok(ConversationRecord {
            conversation_id: session.session_id,
            scenario,
            turns: session.history.into_turns(),
            annotations: Vec::new(),
        })
    }

    /// Closes a session. Closing twice is harmless.
    pub fn close(&self, session_id: &str) -> Result<SessionSummary, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut state = slot.state.lock().expect("session poisoned");
        if state.status == SessionStatus::Active {
            if let Some(store) = &self.store {
                store.record_closed(session_id, self.clock.now_ms())?;
            }
            state.status = SessionStatus::Closed;
            tracing::info!(session = session_id, turns = state.history.len(), "session closed");
        }
        Ok(state.summary())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }
}
