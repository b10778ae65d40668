//! Coach prompting strategies.
//!
//! Three baselines (plain instruction, few-shot chain-of-thought and
//! zero-shot chain-of-thought) and the generalized chain-of-thought (GCoT)
//! strategy, whose prompt is synthesized offline by a two-step builder and
//! cached as a [`PromptArtifact`].

mod baseline;
mod gcot;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{ChatMessage, ChatRequest, ProviderError};

pub use baseline::{
    load_exemplars, render_instruction, render_vanilla_cot, render_zero_shot_cot, Exemplar, INSTRUCTION_TEMPLATE,
    MAX_EXEMPLARS, STEP_BY_STEP, VANILLA_COT_TEMPLATE,
};
pub use gcot::{
    generate_gcot_prompt, infer_variables, parse_prompt_artifact, parse_variables, render_gcot, validate_artifact,
    ArtifactDiagnostic, DataSample, GeneralizableVariableSet, PromptArtifact, Provenance, VariableFamily,
    CONTEXT_PLACEHOLDER, INFER_VARIABLES_PROMPT, GENERATE_PROMPT_PROMPT, REFERENCE_PROMPT_RESPONSE,
    REFERENCE_VARIABLES_RESPONSE, STATEMENT_PLACEHOLDER,
};

/// System text for every coach request.
pub const COACH_SYSTEM_TEXT: &str = "You are a linguistic coach for a junior doctor.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Instruction,
    VanillaCot,
    ZeroShotCot,
    Gcot,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Instruction,
        StrategyKind::VanillaCot,
        StrategyKind::ZeroShotCot,
        StrategyKind::Gcot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Instruction => "instruction",
            StrategyKind::VanillaCot => "vanilla_cot",
            StrategyKind::ZeroShotCot => "zero_shot_cot",
            StrategyKind::Gcot => "gcot",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected instruction, vanilla_cot, zero_shot_cot or gcot)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("vanilla chain-of-thought needs 1 to {MAX_EXEMPLARS} exemplars, got {0}")]
    ExemplarCount(usize),
    #[error("exemplar {index} has an empty {field}")]
    EmptyExemplarField { index: usize, field: &'static str },
    #[error("invalid prompt artifact: {}", join_diagnostics(.0))]
    InvalidArtifact(Vec<ArtifactDiagnostic>),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("cannot parse {what} from model output")]
    Unparseable { what: &'static str, raw: String },
    #[error("{0}")]
    Io(String),
}

fn join_diagnostics(diags: &[ArtifactDiagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

/// Substitutes placeholders in a single left-to-right pass, so values that
/// themselves contain placeholder text are never substituted again.
pub(crate) fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    loop {
        let next = slots
            .iter()
            .filter_map(|(ph, val)| rest.find(ph).map(|pos| (pos, *ph, *val)))
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, ph, val)) => {
                out.push_str(&rest[..pos]);
                out.push_str(val);
                rest = &rest[pos + ph.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{[^{}\n]*\}").expect("valid regex"))
}

/// Every `{...}` placeholder left in a text.
pub fn residual_placeholders(text: &str) -> Vec<String> {
    placeholder_re().find_iter(text).map(|m| m.as_str().to_string()).collect()
}

fn require(value: &str, what: &'static str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::EmptyInput(what))
    } else {
        Ok(())
    }
}

/// Wraps a filled coach prompt in a request: fixed coach system line, the
/// filled prompt as the single user message.
pub(crate) fn coach_request(prompt: String) -> ChatRequest {
    ChatRequest::new(COACH_SYSTEM_TEXT, vec![ChatMessage::user(prompt)]).expect("filled prompt is nonempty")
}
