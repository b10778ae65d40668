mod common;

use std::collections::HashSet;
use std::sync::{mpsc, Arc, Barrier, Mutex};
use std::time::Duration;

use coachsim_core::model::{validate_conversation, Role};
use coachsim_core::prompting::{PromptArtifact, StrategyKind};
use coachsim_core::provider::{ChatModel, ChatRequest, ChatResponse, ProviderError, ScriptedProvider};
use coachsim_service::{ServiceError, SessionStatus, SessionStore};

use common::*;

#[test]
fn lists_scenarios_in_stable_order() {
    let m = manager();
    let a = m.list_scenarios();
    assert_eq!(a.len(), 3);
    assert_eq!(a, m.list_scenarios());
    assert_eq!(a[0].scenario_id, "sc-influenza");
    assert!(a[0].summary.contains("symptoms of influenza"));
}

#[test]
fn empty_scenario_list() {
    let m = coachsim_service::SessionManager::new(coachsim_service::ServiceSetup {
        kb: kb(),
        scenarios: vec![],
        artifact: None,
        exemplars: vec![],
        patient_provider: Arc::new(patient_provider()),
        coach_provider: Arc::new(coach_provider()),
        store: None,
    })
    .unwrap();
    assert!(m.list_scenarios().is_empty());
}

#[test]
fn create_session_cases() {
    let m = manager();
    let s = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap();
    assert_eq!(s.turns, 0);
    assert_eq!(s.status, SessionStatus::Active);
    assert!(matches!(
        m.create_session("nope", StrategyKind::Instruction),
        Err(ServiceError::NotFound { what: "scenario", .. })
    ));
    assert!(matches!(
        m.create_session("sc-influenza", StrategyKind::Gcot),
        Err(ServiceError::Precondition(_))
    ));
    assert!(matches!(
        m.create_session("sc-influenza", StrategyKind::VanillaCot),
        Err(ServiceError::Precondition(_))
    ));
}

#[test]
fn one_exchange_appends_three_turns() {
    let m = manager();
    let id = m.create_session("sc-influenza", StrategyKind::ZeroShotCot).unwrap().session_id;
    let turn = m.post_utterance(&id, "What brings you in today?").unwrap();
    assert_eq!(turn.patient.text, PATIENT_REPLY);
    assert_eq!(turn.coach.text, COACH_REPLY);
    assert_eq!(turn.coach.turn_index, turn.learner.index);
    let roles: Vec<Role> = m.session(&id).unwrap().history.turns().iter().map(|t| t.role).collect();
    assert_eq!(roles, vec![Role::Learner, Role::Patient, Role::Coach]);
    assert!(matches!(m.post_utterance(&id, "   "), Err(ServiceError::InvalidInput(_))));
    assert!(matches!(m.post_utterance("ghost", "hi"), Err(ServiceError::NotFound { .. })));
}

#[test]
fn transcript_after_two_exchanges_validates() {
    let m = manager();
    let id = m.create_session("sc-migraine", StrategyKind::Gcot);
    assert!(id.is_err());
    let m = manager_with(
        Arc::new(patient_provider()),
        Arc::new(coach_provider()),
        None,
        Some(PromptArtifact::reference()),
    );
    let id = m.create_session("sc-migraine", StrategyKind::Gcot).unwrap().session_id;
    assert!(m.get_transcript(&id).unwrap().turns.is_empty());
    m.post_utterance(&id, "Hello, how can I help?").unwrap();
    m.post_utterance(&id, "Do you have a headache?").unwrap();
    let t = m.get_transcript(&id).unwrap();
    assert_eq!(t.turns.len(), 6);
    assert!(t.turns.iter().enumerate().all(|(i, u)| u.index == i));
    assert!(validate_conversation(&t, &kb()).is_empty());
    assert_eq!(t.conversation_id, id);
}

#[test]
fn closed_session_rejects_posts() {
    let m = manager();
    let id = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap().session_id;
    assert_eq!(m.close(&id).unwrap().status, SessionStatus::Closed);
    assert_eq!(m.close(&id).unwrap().status, SessionStatus::Closed);
    assert!(matches!(m.post_utterance(&id, "hi"), Err(ServiceError::Closed(_))));
}

#[test]
fn coach_failure_rolls_back_the_turn() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let coach = Arc::new(FailOn {
        marker: "BOOM",
        reply: "fine",
    });
    let m = manager_with(Arc::new(patient_provider()), coach.clone(), Some(store), None);
    let id = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap().session_id;
    m.post_utterance(&id, "FIRST question").unwrap();
    let log = dir.path().join("sessions").join(format!("{id}.jsonl"));
    let before_log = std::fs::read_to_string(&log).unwrap();
    let before = m.get_transcript(&id).unwrap();

    let err = m.post_utterance(&id, "BOOM goes the network").unwrap_err();
    assert!(matches!(err, ServiceError::Agent(ref e) if e.is_provider()), "{err:?}");
    assert_eq!(m.get_transcript(&id).unwrap(), before);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), before_log);
    assert_eq!(before.turns.len() % 3, 0);

    m.post_utterance(&id, "SECOND question").unwrap();
    assert_eq!(m.get_transcript(&id).unwrap().turns.len(), 6);
}

#[test]
fn patient_failure_rolls_back_the_turn() {
    let m = manager_with(Arc::new(ScriptedProvider::new()), Arc::new(coach_provider()), None, None);
    let id = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap().session_id;
    assert!(m.post_utterance(&id, "hello").is_err());
    assert!(m.get_transcript(&id).unwrap().turns.is_empty());
}

#[test]
fn patient_never_sees_coach_text() {
    let patient = Arc::new(Spy::new(patient_provider()));
    let m = manager_with(patient.clone(), Arc::new(coach_provider()), None, None);
    let id = m.create_session("sc-gastritis", StrategyKind::Instruction).unwrap().session_id;
    for q in ["Hello", "Where does it hurt?", "Since when?", "Any medication?"] {
        m.post_utterance(&id, q).unwrap();
    }
    let requests = patient.requests();
    assert_eq!(requests.len(), 4);
    for r in &requests {
        assert!(!r.full_text().contains("COACH-ONLY"));
    }
    assert!(requests[3].full_text().contains("Since when?"));
}

/// Blocks every completion until released.
struct Gate {
    entered: Mutex<mpsc::Sender<()>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl ChatModel for Gate {
    fn name(&self) -> &str {
        "gate"
    }

    fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.entered.lock().unwrap().send(()).unwrap();
        self.release.lock().unwrap().recv_timeout(Duration::from_secs(10)).unwrap();
        Ok(ChatResponse {
            text: "slow reply".into(),
            provider_name: "gate".into(),
            latency_ms: 0,
            truncated: false,
        })
    }
}

#[test]
fn second_post_to_busy_session_conflicts() {
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let gate = Arc::new(Gate {
        entered: Mutex::new(entered_tx),
        release: Mutex::new(release_rx),
    });
    let m = Arc::new(manager_with(gate, Arc::new(coach_provider()), None, None));
    let id = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap().session_id;
    let other = m.create_session("sc-migraine", StrategyKind::Instruction).unwrap().session_id;

    let first = {
        let (m, id) = (m.clone(), id.clone());
        std::thread::spawn(move || m.post_utterance(&id, "first"))
    };
    entered_rx.recv_timeout(Duration::from_secs(10)).unwrap();
    assert!(matches!(m.post_utterance(&id, "second"), Err(ServiceError::Busy(_))));
    assert_eq!(m.get_transcript(&id).unwrap().turns.len(), 0, "reads are not blocked");

    let second = {
        let (m, other) = (m.clone(), other.clone());
        std::thread::spawn(move || m.post_utterance(&other, "elsewhere"))
    };
    entered_rx.recv_timeout(Duration::from_secs(10)).unwrap();
    release_tx.send(()).unwrap();
    release_tx.send(()).unwrap();
    first.join().unwrap().unwrap();
    second.join().unwrap().unwrap();
    assert_eq!(m.get_transcript(&id).unwrap().turns.len(), 3);
}

#[test]
fn concurrent_sessions_do_not_interleave() {
    let m = Arc::new(manager());
    let ids: Vec<String> = (0..50)
        .map(|i| {
            m.create_session(&format!("sc-{}", ["influenza", "migraine", "gastritis"][i % 3]), StrategyKind::Instruction)
                .unwrap()
                .session_id
        })
        .collect();
    let barrier = Arc::new(Barrier::new(ids.len()));
    let handles: Vec<_> = ids
        .iter()
        .cloned()
        .map(|id| {
            let (m, barrier) = (m.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                for k in 0..4 {
                    m.post_utterance(&id, &format!("{id} message {k}")).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    for id in &ids {
        let t = m.get_transcript(id).unwrap();
        assert_eq!(t.turns.len(), 12);
        let learner: Vec<&str> = t.turns.iter().filter(|u| u.role == Role::Learner).map(|u| u.text.as_str()).collect();
        let want: Vec<String> = (0..4).map(|k| format!("{id} message {k}")).collect();
        assert_eq!(learner, want);
        for chunk in t.turns.chunks(3) {
            assert_eq!(
                chunk.iter().map(|u| u.role).collect::<Vec<_>>(),
                vec![Role::Learner, Role::Patient, Role::Coach]
            );
        }
    }
    let unique: HashSet<_> = ids.iter().collect();
    assert_eq!(unique.len(), 50);
}

#[test]
fn reload_reproduces_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = {
        let m = manager_with(
            Arc::new(patient_provider()),
            Arc::new(coach_provider()),
            Some(SessionStore::open(dir.path()).unwrap()),
            None,
        );
        let a = m.create_session("sc-influenza", StrategyKind::Instruction).unwrap().session_id;
        let b = m.create_session("sc-migraine", StrategyKind::ZeroShotCot).unwrap().session_id;
        m.post_utterance(&a, "one").unwrap();
        m.post_utterance(&a, "two").unwrap();
        m.post_utterance(&b, "three").unwrap();
        m.close(&b).unwrap();
        (
            (a.clone(), m.get_transcript(&a).unwrap()),
            (b.clone(), m.get_transcript(&b).unwrap()),
        )
    };

    // Simulate a crash in the middle of writing a line.
    let log = dir.path().join("sessions").join(format!("{}.jsonl", a.0));
    let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    std::io::Write::write_all(&mut f, b"{\"event\":\"turn\",\"utteran").unwrap();

    let m = manager_with(
        Arc::new(patient_provider()),
        Arc::new(coach_provider()),
        Some(SessionStore::open(dir.path()).unwrap()),
        None,
    );
    assert_eq!(m.get_transcript(&a.0).unwrap(), a.1);
    assert_eq!(m.get_transcript(&b.0).unwrap(), b.1);
    assert_eq!(m.session(&b.0).unwrap().status, SessionStatus::Closed);
    assert_eq!(m.session(&a.0).unwrap().status, SessionStatus::Active);
    assert_eq!(
        serde_json::to_string(&m.get_transcript(&a.0).unwrap()).unwrap(),
        serde_json::to_string(&a.1).unwrap()
    );
}
