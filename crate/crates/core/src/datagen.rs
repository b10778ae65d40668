//! Synthetic conversation generation with planned terminology errors, the
//! mechanized inter-rater agreement proxy and agreement filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{doctor_respond, AgentError, CoachAgent, ErrorPlan, PatientAgent};
use crate::eval::extract_rule_based;
use crate::model::{
    assemble_medical_context, validate_conversation, Annotation, ConversationRecord, Diagnostic, DialogueHistory,
    ErrorCategory, KnowledgeBase, PatientProfile, Role, Scenario, UnknownDisease, Utterance,
};
use crate::provider::{ChatMessage, ChatModel, ChatRequest};
use crate::text::{contains_folded, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryWeights {
    pub condition: f64,
    pub medication: f64,
    pub treatment: f64,
}

impl Default for CategoryWeights {
    fn default() -> Self {
        Self {
            condition: 1.0 / 3.0,
            medication: 1.0 / 3.0,
            treatment: 1.0 / 3.0,
        }
    }
}

impl CategoryWeights {
    pub fn get(&self, category: ErrorCategory) -> f64 {
        match category {
            ErrorCategory::Condition => self.condition,
            ErrorCategory::Medication => self.medication,
            ErrorCategory::Treatment => self.treatment,
        }
    }

    /// Nonzero-weight categories, heaviest first (ties keep declaration order).
    fn by_weight(&self) -> Vec<ErrorCategory> {
        let mut cats: Vec<ErrorCategory> = ErrorCategory::ALL.into_iter().filter(|c| self.get(*c) > 0.0).collect();
        cats.sort_by(|a, b| self.get(*b).total_cmp(&self.get(*a)));
        cats
    }
}

fn default_workers() -> usize {
    1
}

/// Datagen settings, read from a TOML file by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub turns_per_conversation: usize,
    pub error_rate: f64,
    #[serde(default)]
    pub category_weights: CategoryWeights,
    #[serde(default)]
    pub rng_seed: u64,
    pub diseases_per_scenario: usize,
    /// Records whose mean agreement falls below this are dropped.
    #[serde(default)]
    pub agreement_threshold: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            turns_per_conversation: 2,
            error_rate: 0.5,
            category_weights: CategoryWeights::default(),
            rng_seed: 0,
            diseases_per_scenario: 1,
            agreement_threshold: 0.0,
            workers: 1,
        }
    }
}

impl GenerationConfig {
    pub fn check(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::Config(m));
        if self.turns_per_conversation < 1 {
            return bad("turns_per_conversation must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return bad(format!("error_rate {} is outside [0, 1]", self.error_rate));
        }
        let w = self.category_weights;
        if [w.condition, w.medication, w.treatment].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("category weights must be nonnegative".into());
        }
        let sum = w.condition + w.medication + w.treatment;
        if (sum - 1.0).abs() > 1e-6 {
            return bad(format!("category weights sum to {sum}, expected 1"));
        }
        if self.diseases_per_scenario < 1 {
            return bad("diseases_per_scenario must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.agreement_threshold) {
            return bad(format!("agreement_threshold {} is outside [0, 1]", self.agreement_threshold));
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatagenError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatagenError::Io(format!("{}: {e}", path.display())))?;
        let config: GenerationConfig =
            toml::from_str(&text).map_err(|e| DatagenError::Config(format!("{}: {e}", path.display())))?;
        config.check()?;
        Ok(config)
    }

    /// Independent rng stream for one conversation.
    pub fn conversation_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("seed query is empty")]
    EmptySeed,
    #[error("knowledge base has {available} diseases, scenario needs {needed}")]
    TooFewDiseases { available: usize, needed: usize },
    #[error(transparent)]
    Context(#[from] UnknownDisease),
    #[error("no alternative term in any weighted category for scenario {scenario_id}")]
    NoAlternative { scenario_id: String },
    #[error("conversation {conversation_id} aborted after {} turns: {source}", partial.len())]
    Agent {
        conversation_id: String,
        partial: Vec<Utterance>,
        source: AgentError,
    },
    #[error("conversation {conversation_id} failed validation: {}", join(.diagnostics))]
    Invalid {
        conversation_id: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("agreement needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("{0}")]
    Io(String),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

impl DatagenError {
    pub fn is_provider(&self) -> bool {
        matches!(self, DatagenError::Agent { source, .. } if source.is_provider())
    }
}

fn dedup_folded<'a>(terms: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    terms
        .into_iter()
        .filter(|t| !t.trim().is_empty() && seen.insert(t.to_lowercase()))
        .collect()
}

fn overlaps(a: &str, b: &str) -> bool {
    contains_folded(a, b) || contains_folded(b, a)
}

fn plan_in_category<R: Rng + ?Sized>(
    category: ErrorCategory,
    scenario: &Scenario,
    kb: &KnowledgeBase,
    context: &str,
    rng: &mut R,
) -> Option<ErrorPlan> {
    let own_ids: HashSet<&str> = scenario.disease_ids.iter().map(String::as_str).collect();
    let own_terms = dedup_folded(
        scenario
            .disease_ids
            .iter()
            .filter_map(|id| kb.get(id))
            .flat_map(|d| d.terms_for(category)),
    );
    let mut correct_pool: Vec<&str> = own_terms.iter().copied().filter(|t| contains_folded(context, t)).collect();
    let alternatives = dedup_folded(
        kb.entries()
            .filter(|d| !own_ids.contains(d.disease_id.as_str()))
            .flat_map(|d| d.terms_for(category)),
    );
    let alternatives: Vec<&str> = alternatives
        .into_iter()
        .filter(|alt| !contains_folded(context, alt) && !own_terms.iter().any(|own| overlaps(own, alt)))
        .collect();
    if alternatives.is_empty() {
        return None;
    }
    correct_pool.shuffle(rng);
    correct_pool.into_iter().find_map(|correct| {
        let fits: Vec<&str> = alternatives.iter().copied().filter(|a| !overlaps(a, correct)).collect();
        (!fits.is_empty()).then(|| ErrorPlan {
            category,
            correct_term: correct.to_string(),
            injected_term: fits[rng.random_range(0..fits.len())].to_string(),
        })
    })
}

/// Decides whether the next doctor turn carries a terminology error and,
/// if so, which term replaces which.
///
/// The correct term comes from the scenario's own diseases; the injected one
/// from a different disease's terms in the same category, never overlapping
/// the scenario's terms or the context. When the drawn category has no
/// usable pair the remaining nonzero-weight categories are tried, heaviest
/// first.
pub fn plan_error_injection<R: Rng + ?Sized>(
    config: &GenerationConfig,
    scenario: &Scenario,
    kb: &KnowledgeBase,
    rng: &mut R,
) -> Result<Option<ErrorPlan>, DatagenError> {
    let context = assemble_medical_context(scenario, kb)?;
    if rng.random::<f64>() >= config.error_rate {
        return Ok(None);
    }
    let w = config.category_weights;
    let dist = WeightedIndex::new([w.condition, w.medication, w.treatment])
        .map_err(|e| DatagenError::Config(format!("category weights: {e}")))?;
    let drawn = ErrorCategory::ALL[dist.sample(rng)];
    let order = std::iter::once(drawn).chain(w.by_weight().into_iter().filter(|c| *c != drawn));
    for category in order {
        if let Some(plan) = plan_in_category(category, scenario, kb, &context, rng) {
            return Ok(Some(plan));
        }
    }
    Err(DatagenError::NoAlternative {
        scenario_id: scenario.scenario_id.clone(),
    })
}

/// Builds a scenario around a seed query: the diseases whose name and
/// symptoms share most tokens with the query (random tie-break), and a
/// profile whose complaint is the query itself.
pub fn select_scenario<R: Rng + ?Sized>(
    conversation_id: &str,
    seed_query: &str,
    kb: &KnowledgeBase,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<Scenario, DatagenError> {
    if seed_query.trim().is_empty() {
        return Err(DatagenError::EmptySeed);
    }
    if kb.len() < config.diseases_per_scenario {
        return Err(DatagenError::TooFewDiseases {
            available: kb.len(),
            needed: config.diseases_per_scenario,
        });
    }
    let query: HashSet<String> = tokenize(seed_query).into_iter().collect();
    let mut ranked: Vec<(usize, u64, &str)> = kb
        .entries()
        .map(|d| {
            let words: HashSet<String> = std::iter::once(d.name.as_str())
                .chain(d.symptoms.iter().map(String::as_str))
                .flat_map(tokenize)
                .collect();
            (words.intersection(&query).count(), rng.random::<u64>(), d.disease_id.as_str())
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Scenario {
        scenario_id: conversation_id.to_string(),
        profile: PatientProfile {
            profile_id: format!("{conversation_id}-patient"),
            age: rng.random_range(18..=85),
            persona: String::new(),
            presenting_complaint: seed_query.trim().to_string(),
        },
        disease_ids: ranked
            .into_iter()
            .take(config.diseases_per_scenario)
            .map(|(_, _, id)| id.to_string())
            .collect(),
    })
}

/// Chat backends for the three roles. They may all be the same provider.
#[derive(Clone, Copy)]
pub struct AgentProviders<'a> {
    pub patient: &'a dyn ChatModel,
    pub doctor: &'a dyn ChatModel,
    pub coach: &'a dyn ChatModel,
}

impl<'a> AgentProviders<'a> {
    pub fn uniform(provider: &'a dyn ChatModel) -> Self {
        Self {
            patient: provider,
            doctor: provider,
            coach: provider,
        }
    }
}

/// Counters kept while generating, independent of the written records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatagenTally {
    pub conversations: usize,
    pub patient_responses: usize,
    pub doctor_statements: usize,
    pub coach_turns: usize,
    pub annotations: BTreeMap<ErrorCategory, usize>,
    pub nonlingual: usize,
    pub failed: usize,
}

impl DatagenTally {
    fn absorb(&mut self, other: &DatagenTally) {
        self.conversations += other.conversations;
        self.patient_responses += other.patient_responses;
        self.doctor_statements += other.doctor_statements;
        self.coach_turns += other.coach_turns;
        for (k, v) in &other.annotations {
            *self.annotations.entry(*k).or_default() += v;
        }
        self.nonlingual += other.nonlingual;
        self.failed += other.failed;
    }

    pub fn total_annotations(&self) -> usize {
        self.annotations.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedConversation {
    pub record: ConversationRecord,
    pub plans: Vec<Option<ErrorPlan>>,
    pub tally: DatagenTally,
}

pub fn conversation_id(index: usize) -> String {
    format!("conv-{index:05}")
}

/// Runs the patient / doctor_agent / coach loop.
///
/// Timestamps are logical (the turn index) so output depends only on the
/// inputs and the provider responses.
pub struct Generator<'a> {
    pub kb: &'a KnowledgeBase,
    pub config: &'a GenerationConfig,
    pub providers: AgentProviders<'a>,
    pub coach: &'a CoachAgent,
    pub patient: PatientAgent,
}

impl<'a> Generator<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        config: &'a GenerationConfig,
        providers: AgentProviders<'a>,
        coach: &'a CoachAgent,
    ) -> Result<Self, DatagenError> {
        config.check()?;
        coach.check().map_err(|e| DatagenError::Config(e.to_string()))?;
        Ok(Self {
            kb,
            config,
            providers,
            coach,
            patient: PatientAgent::default(),
        })
    }

    pub fn generate_conversation(&self, index: usize, seed_query: &str) -> Result<GeneratedConversation, DatagenError> {
        let id = conversation_id(index);
        let mut rng = self.config.conversation_rng(index);
        let scenario = select_scenario(&id, seed_query, self.kb, self.config, &mut rng)?;
        self.generate_in_scenario(&id, scenario, seed_query, &mut rng)
    }

    pub fn generate_in_scenario<R: Rng + ?Sized>(
        &self,
        conversation_id: &str,
        scenario: Scenario,
        seed_query: &str,
        rng: &mut R,
    ) -> Result<GeneratedConversation, DatagenError> {
        if seed_query.trim().is_empty() {
            return Err(DatagenError::EmptySeed);
        }
        let context = assemble_medical_context(&scenario, self.kb)?;
        let mut history = DialogueHistory::new();
        let mut annotations = Vec::new();
        let mut plans = Vec::new();
        let mut tally = DatagenTally {
            conversations: 1,
            ..Default::default()
        };

        let abort = |history: &DialogueHistory, source: AgentError| DatagenError::Agent {
            conversation_id: conversation_id.to_string(),
            partial: history.turns().to_vec(),
            source,
        };

        let mut last_doctor: Option<Utterance> = None;
        for _ in 0..self.config.turns_per_conversation {
            let patient_text = match &last_doctor {
                None => seed_query.trim().to_string(),
                Some(doctor) => self
                    .patient
                    .respond(self.providers.patient, &scenario, doctor, &history)
                    .map_err(|e| abort(&history, e))?
                    .text,
            };
            let ts = history.len() as u64;
            history.append(Role::Patient, patient_text.clone(), ts);
            tally.patient_responses += 1;

            let plan = plan_error_injection(self.config, &scenario, self.kb, rng)?;
            let doctor = doctor_respond(self.providers.doctor, &patient_text, &context, plan.as_ref(), history.len())
                .map_err(|e| abort(&history, e))?;
            let doctor = history.append(Role::DoctorAgent, doctor.text, doctor.index as u64).clone();
            tally.doctor_statements += 1;

            let feedback = self
                .coach
                .feedback_with_context(self.providers.coach, &context, &doctor, &history)
                .map_err(|e| abort(&history, e))?;
            let ts = history.len() as u64;
            history.append(Role::Coach, feedback.text.clone(), ts);
            tally.coach_turns += 1;

            match &plan {
                Some(p) => {
                    *tally.annotations.entry(p.category).or_default() += 1;
                    annotations.push(Annotation {
                        turn_index: doctor.index,
                        category: p.category,
                        incorrect_term: p.injected_term.clone(),
                        correct_term: p.correct_term.clone(),
                        reference_feedback: feedback.text,
                    });
                }
                None => tally.nonlingual += 1,
            }
            plans.push(plan);
            last_doctor = Some(doctor);
        }

        let record = ConversationRecord {
            conversation_id: conversation_id.to_string(),
            scenario,
            turns: history.into_turns(),
            annotations,
        };
        let diagnostics = validate_conversation(&record, self.kb);
        if !diagnostics.is_empty() {
            return Err(DatagenError::Invalid {
                conversation_id: conversation_id.to_string(),
                diagnostics,
            });
        }
        Ok(GeneratedConversation { record, plans, tally })
    }

    /// Generates one conversation per seed query on a bounded worker pool.
    /// Output order follows the seed order regardless of scheduling.
    pub fn generate_dataset(&self, seeds: &[String]) -> DatagenRun {
        let run = |_: ()| -> Vec<Result<GeneratedConversation, (usize, DatagenError)>> {
            seeds
                .par_iter()
                .enumerate()
                .map(|(i, q)| self.generate_conversation(i, q).map_err(|e| (i, e)))
                .collect()
        };
        let results = match rayon::ThreadPoolBuilder::new().num_threads(self.config.workers).build() {
            Ok(pool) => pool.install(|| run(())),
            Err(e) => {
                tracing::warn!(error = %e, "cannot build worker pool, using the global one");
                run(())
            }
        };

        let mut out = DatagenRun::default();
        for result in results {
            match result {
                Ok(conv) => {
                    out.tally.absorb(&conv.tally);
                    out.conversations.push(conv);
                }
                Err((index, error)) => {
                    tracing::warn!(conversation = index, %error, "conversation failed");
                    out.tally.failed += 1;
                    out.failures.push(GenerationFailure {
                        index,
                        seed_query: seeds[index].clone(),
                        error,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationFailure {
    pub index: usize,
    pub seed_query: String,
    pub error: DatagenError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatagenRun {
    pub conversations: Vec<GeneratedConversation>,
    pub failures: Vec<GenerationFailure>,
    pub tally: DatagenTally,
}

/// Reads seed queries, one per nonblank line.
pub fn load_seed_queries(path: impl AsRef<Path>) -> Result<Vec<String>, DatagenError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DatagenError::Io(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Token-level F1 between two strings. Two empty strings agree fully.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let ta = tokenize(a);
    let tb = tokenize(b);
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / ta.len() as f64;
    let r = overlap as f64 / tb.len() as f64;
    2.0 * p * r / (p + r)
}

/// How two raters' term pairs for one slot are compared.
#[derive(Clone, Copy, Default)]
pub enum AgreementScorer<'a> {
    #[default]
    TokenF1,
    /// Asks a model for a similarity in [0,1]; falls back to token F1 when
    /// the call fails or the answer is not a number.
    Judge(&'a dyn ChatModel),
}

const JUDGE_SYSTEM_TEXT: &str = "You compare medical terms.";

impl AgreementScorer<'_> {
    fn term_similarity(&self, a: &str, b: &str) -> f64 {
        match self {
            AgreementScorer::TokenF1 => token_f1(a, b),
            AgreementScorer::Judge(model) => {
                let prompt = format!(
                    "On a scale from 0 to 1, how well do these two terms refer to the same medical concept? \
                     Answer with the number only.\nA: {a}\nB: {b}"
                );
                let judged = ChatRequest::new(JUDGE_SYSTEM_TEXT, vec![ChatMessage::user(prompt)])
                    .ok()
                    .and_then(|req| model.complete(&req).ok())
                    .and_then(|resp| resp.text.trim().trim_end_matches('.').parse::<f64>().ok())
                    .filter(|v| v.is_finite());
                match judged {
                    Some(v) => v.clamp(0.0, 1.0),
                    None => token_f1(a, b),
                }
            }
        }
    }

    fn slot_score(&self, a: &Annotation, b: &Annotation) -> f64 {
        0.5 * (self.term_similarity(&a.incorrect_term, &b.incorrect_term)
            + self.term_similarity(&a.correct_term, &b.correct_term))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAgreement {
    pub turn_index: usize,
    pub category: ErrorCategory,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub conversation_id: String,
    pub slots: Vec<SlotAgreement>,
    pub mean_agreement: f64,
}

/// Agreement between rater annotation lists for one conversation.
///
/// Slots are keyed by (turn_index, category). Each rater pair scores the
/// averaged token F1 of the incorrect and correct terms, or 0 when only one
/// of the two filled the slot. A conversation with no slots at all agrees
/// fully.
pub fn compute_agreement(
    conversation_id: &str,
    raters: &[Vec<Annotation>],
    scorer: AgreementScorer<'_>,
) -> Result<AgreementReport, DatagenError> {
    if raters.len() < 2 {
        return Err(DatagenError::TooFewRaters(raters.len()));
    }
    let keyed: Vec<BTreeMap<(usize, ErrorCategory), &Annotation>> = raters
        .iter()
        .map(|list| {
            let mut m = BTreeMap::new();
            for a in list {
                m.entry((a.turn_index, a.category)).or_insert(a);
            }
            m
        })
        .collect();
    let slots: std::collections::BTreeSet<(usize, ErrorCategory)> =
        keyed.iter().flat_map(|m| m.keys().copied()).collect();

    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..keyed.len() {
            for j in i + 1..keyed.len() {
                pairs += 1;
                total += match (keyed[i].get(&slot), keyed[j].get(&slot)) {
                    (Some(a), Some(b)) => scorer.slot_score(a, b),
                    _ => 0.0,
                };
            }
        }
        out.push(SlotAgreement {
            turn_index: slot.0,
            category: slot.1,
            agreement: total / pairs as f64,
        });
    }
    let mean_agreement = if out.is_empty() {
        1.0
    } else {
        out.iter().map(|s| s.agreement).sum::<f64>() / out.len() as f64
    };
    Ok(AgreementReport {
        conversation_id: conversation_id.to_string(),
        slots: out,
        mean_agreement,
    })
}

/// A second annotation pass read off the coach feedback itself: every
/// correction the coach states becomes an annotation on the doctor turn it
/// follows. The category is whichever context field holds the correct term,
/// else the planned category for that turn.
pub fn feedback_rater(record: &ConversationRecord, kb: &KnowledgeBase) -> Vec<Annotation> {
    let diseases: Vec<_> = record.scenario.disease_ids.iter().filter_map(|id| kb.get(id)).collect();
    let classify = |term: &str| {
        ErrorCategory::ALL.into_iter().find(|c| {
            diseases
                .iter()
                .any(|d| d.terms_for(*c).iter().any(|t| t.eq_ignore_ascii_case(term.trim())))
        })
    };
    let mut out = Vec::new();
    for pair in record.turns.windows(2) {
        let (doctor, coach) = (&pair[0], &pair[1]);
        if !doctor.role.is_doctor() || coach.role != Role::Coach {
            continue;
        }
        let planned = record.annotations_for(doctor.index).next().map(|a| a.category);
        for c in extract_rule_based(&coach.text).into_iter().filter(|c| !c.affirmation) {
            let correct = c.correct_term.unwrap_or_default();
            let category = classify(&correct).or(planned).unwrap_or(ErrorCategory::Condition);
            out.push(Annotation {
                turn_index: doctor.index,
                category,
                incorrect_term: c.incorrect_term,
                correct_term: correct,
                reference_feedback: String::new(),
            });
        }
    }
    out
}

/// Agreement between the planned annotations and the feedback rater.
pub fn record_agreement(
    record: &ConversationRecord,
    kb: &KnowledgeBase,
    scorer: AgreementScorer<'_>,
) -> Result<AgreementReport, DatagenError> {
    compute_agreement(
        &record.conversation_id,
        &[record.annotations.clone(), feedback_rater(record, kb)],
        scorer,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionSummary {
    pub kept: usize,
    pub total: usize,
    pub threshold: f64,
}

/// Keeps records whose mean agreement reaches the threshold.
pub fn filter_dataset(
    records: Vec<(ConversationRecord, AgreementReport)>,
    threshold: f64,
) -> Result<(Vec<ConversationRecord>, RetentionSummary), DatagenError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(DatagenError::Config(format!("threshold {threshold} is outside [0, 1]")));
    }
    let total = records.len();
    let kept: Vec<ConversationRecord> = records
        .into_iter()
        .filter(|(_, report)| report.mean_agreement >= threshold)
        .map(|(r, _)| r)
        .collect();
    let summary = RetentionSummary {
        kept: kept.len(),
        total,
        threshold,
    };
    tracing::info!(kept = summary.kept, total, threshold, "agreement filter");
    Ok((kept, summary))
}
