//! The three role agents: patient, coach and the data-generation doctor.
//!
//! Agents hold no conversation state. Callers pass the history in and append
//! the returned utterances themselves.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    assemble_medical_context, coach_excluded, now_ms, DialogueHistory, ErrorCategory, KnowledgeBase, Role, Scenario,
    UnknownDisease, Utterance,
};
use crate::prompting::{
    render_gcot, render_instruction, render_vanilla_cot, render_zero_shot_cot, Exemplar, PromptArtifact, PromptError,
    StrategyKind,
};
use crate::provider::{ChatMessage, ChatModel, ChatRequest, ProviderError};
use crate::text::contains_folded;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Context(#[from] UnknownDisease),
    #[error("doctor reply failed error injection ({injected:?} for {correct:?}) after retry: {text:?}")]
    InjectionVerification {
        injected: String,
        correct: String,
        text: String,
    },
}

impl AgentError {
    pub fn is_provider(&self) -> bool {
        matches!(self, AgentError::Provider(_) | AgentError::Prompt(PromptError::Provider(_)))
    }
}

/// Feedback bound to one learner (or doctor_agent) turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoachFeedback {
    pub text: String,
    pub strategy: StrategyKind,
    pub latency_ms: u64,
    pub turn_index: usize,
}

/// A planned terminology error for one doctor_agent turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPlan {
    pub category: ErrorCategory,
    pub correct_term: String,
    pub injected_term: String,
}

impl ErrorPlan {
    pub fn check(&self, context: &str) -> Result<(), AgentError> {
        if self.injected_term.trim().is_empty() || self.correct_term.trim().is_empty() {
            return Err(AgentError::Precondition("error plan has an empty term".into()));
        }
        if self.injected_term.to_lowercase() == self.correct_term.to_lowercase() {
            return Err(AgentError::Precondition(format!(
                "error plan injects {:?} for itself",
                self.correct_term
            )));
        }
        if !contains_folded(context, &self.correct_term) {
            return Err(AgentError::Precondition(format!(
                "correct term {:?} is not in the medical context",
                self.correct_term
            )));
        }
        Ok(())
    }
}

/// Default patient persona prompt. Not canonical; override with a template
/// file containing a `{profile}` slot.
pub const PATIENT_TEMPLATE: &str =
    "You are the patient described by this profile: {profile}. Answer the doctor briefly and stay in character.";

pub const PROFILE_SLOT: &str = "{profile}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientAgent {
    template: String,
}

impl Default for PatientAgent {
    fn default() -> Self {
        Self {
            template: PATIENT_TEMPLATE.to_string(),
        }
    }
}

impl PatientAgent {
    pub fn with_template(template: impl Into<String>) -> Result<Self, AgentError> {
        let template = template.into();
        if template.matches(PROFILE_SLOT).count() != 1 {
            return Err(AgentError::Precondition(format!(
                "patient template must contain {PROFILE_SLOT} exactly once"
            )));
        }
        Ok(Self { template })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| AgentError::Precondition(format!("cannot read {}: {e}", path.display())))?;
        Self::with_template(text.trim_end())
    }

    fn profile_text(scenario: &Scenario) -> String {
        let p = &scenario.profile;
        let mut s = format!("age {}", p.age);
        if !p.persona.trim().is_empty() {
            s.push_str(&format!("; {}", p.persona.trim()));
        }
        s.push_str(&format!("; presenting complaint: {}", p.presenting_complaint.trim()));
        s
    }

    /// Builds the patient request from the profile, the coach-excluded
    /// history and the doctor's latest utterance.
    pub fn render(
        &self,
        scenario: &Scenario,
        learner_utterance: &Utterance,
        history: &DialogueHistory,
    ) -> Result<ChatRequest, AgentError> {
        if !learner_utterance.role.is_doctor() {
            return Err(AgentError::Precondition(format!(
                "patient answers learner or doctor_agent turns, not {}",
                learner_utterance.role
            )));
        }
        let system = self.template.replacen(PROFILE_SLOT, &Self::profile_text(scenario), 1);
        let visible = coach_excluded(history);
        let mut messages: Vec<ChatMessage> = visible
            .turns()
            .iter()
            .filter(|t| t.index != learner_utterance.index)
            .map(|t| match t.role {
                Role::Patient => ChatMessage::assistant(&t.text),
                _ => ChatMessage::user(&t.text),
            })
            .collect();
        messages.push(ChatMessage::user(&learner_utterance.text));
        Ok(ChatRequest::new(system, messages)?)
    }

    pub fn respond(
        &self,
        provider: &dyn ChatModel,
        scenario: &Scenario,
        learner_utterance: &Utterance,
        history: &DialogueHistory,
    ) -> Result<Utterance, AgentError> {
        let request = self.render(scenario, learner_utterance, history)?;
        let response = provider.complete(&request)?;
        Ok(Utterance {
            index: learner_utterance.index + 1,
            role: Role::Patient,
            text: response.text,
            timestamp: now_ms(),
        })
    }
}

/// Patient reply with the default persona template.
pub fn patient_respond(
    provider: &dyn ChatModel,
    scenario: &Scenario,
    learner_utterance: &Utterance,
    history: &DialogueHistory,
) -> Result<Utterance, AgentError> {
    PatientAgent::default().respond(provider, scenario, learner_utterance, history)
}

/// Coach policy: a strategy plus whatever it needs to render.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoachAgent {
    pub strategy: StrategyKind,
    pub artifact: Option<PromptArtifact>,
    pub exemplars: Vec<Exemplar>,
}

impl CoachAgent {
    pub fn new(strategy: StrategyKind) -> Self {
        Self {
            strategy,
            artifact: None,
            exemplars: Vec::new(),
        }
    }

    pub fn with_artifact(mut self, artifact: PromptArtifact) -> Self {
        self.artifact = Some(artifact);
        self
    }

    pub fn with_exemplars(mut self, exemplars: Vec<Exemplar>) -> Self {
        self.exemplars = exemplars;
        self
    }

    /// Fails when the strategy lacks its artifact or exemplars.
    pub fn check(&self) -> Result<(), AgentError> {
        match self.strategy {
            StrategyKind::Gcot if self.artifact.is_none() => Err(AgentError::Precondition(
                "gcot strategy needs a prompt artifact".into(),
            )),
            StrategyKind::VanillaCot if self.exemplars.is_empty() => Err(AgentError::Precondition(
                "vanilla_cot strategy needs exemplars".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Renders the coach request for a statement given an already assembled
    /// medical context and the full history (coach turns included).
    pub fn render(
        &self,
        context: &str,
        learner_utterance: &Utterance,
        history: &DialogueHistory,
    ) -> Result<ChatRequest, AgentError> {
        self.check()?;
        if !learner_utterance.role.is_doctor() {
            return Err(AgentError::Precondition(format!(
                "coach reviews learner or doctor_agent turns, not {}",
                learner_utterance.role
            )));
        }
        let statement = learner_utterance.text.as_str();
        let mut request = match self.strategy {
            StrategyKind::Instruction => render_instruction(statement, context)?,
            StrategyKind::ZeroShotCot => render_zero_shot_cot(statement, context)?,
            StrategyKind::VanillaCot => render_vanilla_cot(statement, context, &self.exemplars)?,
            StrategyKind::Gcot => render_gcot(statement, context, self.artifact.as_ref().expect("checked above"))?,
        };

        let prior: Vec<&Utterance> = history
            .turns()
            .iter()
            .filter(|t| t.index != learner_utterance.index)
            .collect();
        if !prior.is_empty() {
            let mut transcript = String::from("Conversation so far:\n");
            for t in prior {
                let speaker = match t.role {
                    Role::Learner | Role::DoctorAgent => "Doctor",
                    Role::Patient => "Patient",
                    Role::Coach => "Coach",
                };
                transcript.push_str(&format!("{speaker}: {}\n", t.text));
            }
            let prompt = request.messages.pop().expect("renderers emit one message");
            request.messages.push(ChatMessage::user(format!("{transcript}\n{}", prompt.text)));
        }
        Ok(request)
    }

    pub fn feedback_with_context(
        &self,
        provider: &dyn ChatModel,
        context: &str,
        learner_utterance: &Utterance,
        history: &DialogueHistory,
    ) -> Result<CoachFeedback, AgentError> {
        let request = self.render(context, learner_utterance, history)?;
        let started = Instant::now();
        let response = provider.complete(&request)?;
        Ok(CoachFeedback {
            text: response.text,
            strategy: self.strategy,
            latency_ms: started.elapsed().as_millis() as u64,
            turn_index: learner_utterance.index,
        })
    }

    pub fn feedback(
        &self,
        provider: &dyn ChatModel,
        scenario: &Scenario,
        kb: &KnowledgeBase,
        learner_utterance: &Utterance,
        history: &DialogueHistory,
    ) -> Result<CoachFeedback, AgentError> {
        let context = assemble_medical_context(scenario, kb)?;
        self.feedback_with_context(provider, &context, learner_utterance, history)
    }
}

/// Coach feedback for one statement with the given strategy.
#[allow(clippy::too_many_arguments)]
pub fn coach_feedback(
    provider: &dyn ChatModel,
    scenario: &Scenario,
    kb: &KnowledgeBase,
    learner_utterance: &Utterance,
    history: &DialogueHistory,
    strategy: StrategyKind,
    artifact: Option<&PromptArtifact>,
    exemplars: &[Exemplar],
) -> Result<CoachFeedback, AgentError> {
    let agent = CoachAgent {
        strategy,
        artifact: artifact.cloned(),
        exemplars: exemplars.to_vec(),
    };
    agent.feedback(provider, scenario, kb, learner_utterance, history)
}

const DOCTOR_SYSTEM: &str = "You are a doctor answering a patient's question in a short consultation reply. \
Base your answer on this medical context:\n";

fn doctor_request(query: &str, context: &str, plan: Option<&ErrorPlan>, reminder: bool) -> Result<ChatRequest, AgentError> {
    let mut system = format!("{DOCTOR_SYSTEM}{context}");
    if let Some(plan) = plan {
        system.push_str(&format!(
            "\n\nIn this answer, use the {} term \"{}\" where the medical context calls for \"{}\", as a junior \
             doctor with a common misconception would. Do not mention \"{}\".",
            plan.category, plan.injected_term, plan.correct_term, plan.correct_term
        ));
        if reminder {
            system.push_str(&format!(
                "\nYour previous answer did not follow this. The answer must contain \"{}\" and must not contain \"{}\".",
                plan.injected_term, plan.correct_term
            ));
        }
    }
    Ok(ChatRequest::new(system, vec![ChatMessage::user(query)])?)
}

/// Doctor-agent answer to a patient query, optionally carrying a planned
/// terminology error.
///
/// With a plan, the reply must contain the injected term and not the correct
/// one (case-insensitive). One retry is made before giving up.
pub fn doctor_respond(
    provider: &dyn ChatModel,
    query: &str,
    context: &str,
    plan: Option<&ErrorPlan>,
    index: usize,
) -> Result<Utterance, AgentError> {
    if query.trim().is_empty() {
        return Err(AgentError::Precondition("patient query is empty".into()));
    }
    if let Some(plan) = plan {
        plan.check(context)?;
    }
    let mut text = provider.complete(&doctor_request(query, context, plan, false)?)?.text;
    if let Some(plan) = plan {
        let ok = |t: &str| contains_folded(t, &plan.injected_term) && !contains_folded(t, &plan.correct_term);
        if !ok(&text) {
            text = provider.complete(&doctor_request(query, context, Some(plan), true)?)?.text;
            if !ok(&text) {
                return Err(AgentError::InjectionVerification {
                    injected: plan.injected_term.clone(),
                    correct: plan.correct_term.clone(),
                    text,
                });
            }
        }
    }
    Ok(Utterance {
        index,
        role: Role::DoctorAgent,
        text,
        timestamp: now_ms(),
    })
}
