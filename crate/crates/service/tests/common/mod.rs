#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use coachsim_core::model::{DiseaseEntry, KnowledgeBase, PatientProfile, Scenario};
use coachsim_core::prompting::PromptArtifact;
use coachsim_core::provider::{ChatModel, ChatRequest, ChatResponse, ProviderError, ScriptedProvider};
use coachsim_service::{SequentialIds, ServiceSetup, SessionManager, SessionStore, StepClock};

pub const PATIENT_REPLY: &str = "It started three days ago.";
pub const COACH_REPLY: &str = "COACH-ONLY: Instead of aspirin, it should be oseltamivir.";

/// Records every request before delegating.
pub struct Spy<P> {
    pub inner: P,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl<P> Spy<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl<P: ChatModel> ChatModel for Spy<P> {
    fn name(&self) -> &str {
        "spy"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

pub fn kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for (id, symptoms, med) in [
        ("influenza", vec!["fever", "dry cough"], "oseltamivir"),
        ("migraine", vec!["throbbing headache"], "sumatriptan"),
        ("gastritis", vec!["upper abdominal pain"], "omeprazole"),
    ] {
        kb.insert(DiseaseEntry {
            disease_id: id.into(),
            name: id.into(),
            description: String::new(),
            symptoms: symptoms.into_iter().map(String::from).collect(),
            diagnostic_tests: vec![],
            treatments: vec!["rest".into()],
            medications: vec![med.into()],
        })
        .unwrap();
    }
    kb
}

pub fn scenarios() -> Vec<Scenario> {
    ["influenza", "migraine", "gastritis"]
        .iter()
        .enumerate()
        .map(|(i, d)| Scenario {
            scenario_id: format!("sc-{d}"),
            profile: PatientProfile {
                profile_id: format!("p{i}"),
                age: 30 + i as u32,
                persona: "office worker".into(),
                presenting_complaint: format!("symptoms of {d}"),
            },
            disease_ids: vec![d.to_string()],
        })
        .collect()
}

pub fn patient_provider() -> ScriptedProvider {
    ScriptedProvider::new().with_fallback(PATIENT_REPLY)
}

pub fn coach_provider() -> ScriptedProvider {
    ScriptedProvider::new().with_fallback(COACH_REPLY)
}

pub fn manager_with(
    patient: Arc<dyn ChatModel>,
    coach: Arc<dyn ChatModel>,
    store: Option<SessionStore>,
    artifact: Option<PromptArtifact>,
) -> SessionManager {
    SessionManager::new(ServiceSetup {
        kb: kb(),
        scenarios: scenarios(),
        artifact,
        exemplars: vec![],
        patient_provider: patient,
        coach_provider: coach,
        store,
    })
    .unwrap()
    .with_clock(Arc::new(StepClock::new(1_000, 1)))
    .with_ids(Arc::new(SequentialIds::new("s")))
}

pub fn manager() -> SessionManager {
    manager_with(Arc::new(patient_provider()), Arc::new(coach_provider()), None, None)
}

/// Fails any request mentioning `marker`, answers `reply` otherwise.
pub struct FailOn {
    pub marker: &'static str,
    pub reply: &'static str,
}

impl ChatModel for FailOn {
    fn name(&self) -> &str {
        "fail-on"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        if request.full_text().contains(self.marker) {
            return Err(ProviderError::Transport {
                attempts: 4,
                message: "unavailable".into(),
            });
        }
        Ok(ChatResponse {
            text: self.reply.into(),
            provider_name: "fail-on".into(),
            latency_ms: 0,
            truncated: false,
        })
    }
}
