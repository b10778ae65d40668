//! Generalized chain-of-thought prompts.
//!
//! Building a GCoT prompt takes two model calls. The first infers the
//! generalizable variables (slot families such as an incorrect and a correct
//! medication name) shared by the reasoning of several input/output samples.
//! The second turns those variables into a reusable prompt with thinking
//! steps and bracketed correction templates. The result is validated and
//! cached as a [`PromptArtifact`]; live coaching only ever renders from a
//! cached artifact.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{coach_request, fill, require, residual_placeholders, PromptError};
use crate::provider::{fingerprint, ChatMessage, ChatModel, ChatRequest};

pub const STATEMENT_PLACEHOLDER: &str = "{doctor's statement}";
pub const CONTEXT_PLACEHOLDER: &str = "{Medical Context}";

/// Step-one meta-prompt.
pub const INFER_VARIABLES_PROMPT: &str = "Imagine you are reasoning step by step from input to output, please infer \
generalizable variables in the reasoning steps across the following data samples.";

/// Step-two meta-prompt.
pub const GENERATE_PROMPT_PROMPT: &str = "Generate the corresponding prompt for GPT-3.5, which should: (1) follow the \
Chain-of-Thought patterns; (2) ensure reasoning steps are not specific to any data; (3) base reasoning steps on these \
variables.";

const BUILDER_SYSTEM_TEXT: &str = "You are an expert in clinical communication and prompt design.";

/// Variables text as a step-one response would present them; doubles as a
/// fixture for scripted and replayed builder runs.
pub const REFERENCE_VARIABLES_RESPONSE: &str = "Generalizable Variables across Examples:

Condition Miscommunication:
- Incorrect disease name or symptom.
- Correct disease name or symptom based on medical context.

Medication Miscommunication:
- Incorrect medication name or treatment suggestion.
- Correct medication name or treatment suggestion based on medical context.

Treatment Miscommunication:
- Incorrect treatment advice.
- Correct treatment advice based on medical context.
";

/// The default prompt as a step-two response would present it.
pub const REFERENCE_PROMPT_RESPONSE: &str = "Instruction: As a linguistic coach for a junior doctor, your task is to \
evaluate the doctor's statement: {doctor's statement} against the provided medical context: {Medical Context}. Your \
evaluation should identify any discrepancies within the doctor's communication. Where discrepancies arise, guide the \
doctor towards more accurate medical terminology and understanding. If the statements align well with the medical \
context, provide positive reinforcement and additional advice if necessary.
Thinking steps:
Identify Key Medical Terms:
Extract medical terms from the doctor's statement, including diseases, symptoms, medications, and treatments.
Compare with Medical Context:
Check these terms against the medical context for accuracy in:
- Disease/symptom identification.
- Medication/treatment recommendation.
Feedback:
- If Incorrect: Point out the error and provide the correct term from the medical context. Use simple corrections \
like \"Instead of [incorrect symptom], it should be [correct symptom]\", \"Instead of [incorrect medication name], it \
should be [correct medication name]\" or \"Instead of [incorrect disease name], it should be [correct disease name]\".
- If Correct: Affirm with \"Your diagnosis/treatment aligns well with the medical context. Good job.\"
Note: <correct symptom>, <correct medication name> and <correct disease name> are extracted from medical context
";

/// An input/output pair shown to the variable-inference step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSample {
    pub input: String,
    pub output: String,
}

impl DataSample {
    /// Input is the doctor's statement plus the medical context; output is
    /// the coach's feedback.
    pub fn from_parts(statement: &str, context: &str, feedback: &str) -> Self {
        Self {
            input: format!("Doctor's statement: {}\nMedical context: {}", statement.trim(), context.trim()),
            output: feedback.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableFamily {
    pub name: String,
    pub incorrect_slot: String,
    pub correct_slot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeneralizableVariableSet {
    pub families: Vec<VariableFamily>,
}

impl GeneralizableVariableSet {
    pub fn check(&self) -> Result<(), String> {
        if self.families.is_empty() {
            return Err("no variable families".into());
        }
        let mut seen = HashSet::new();
        for f in &self.families {
            if f.name.trim().is_empty() || f.incorrect_slot.trim().is_empty() || f.correct_slot.trim().is_empty() {
                return Err(format!("family {:?} is missing a name or slot", f.name));
            }
            if !seen.insert(f.name.to_lowercase()) {
                return Err(format!("duplicate family {:?}", f.name));
            }
        }
        Ok(())
    }

    /// The bulleted form sent to the prompt-generation step.
    pub fn to_text(&self) -> String {
        let mut out = String::from("Generalizable Variables across Examples:\n");
        for f in &self.families {
            out.push_str(&format!("\n{}:\n- {}\n- {}\n", f.name, f.incorrect_slot, f.correct_slot));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Fingerprint of the request that produced the artifact.
    pub inputs_fingerprint: String,
    pub created_at_ms: u64,
}

/// A validated, cacheable GCoT prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptArtifact {
    pub instruction_text: String,
    pub thinking_steps: String,
    pub correction_templates: Vec<String>,
    pub affirmation_template: String,
    pub provenance: Provenance,
}

impl PromptArtifact {
    /// The hand-transcribed default prompt; works without any builder run.
    pub fn reference() -> Self {
        let mut artifact = parse_prompt_artifact(REFERENCE_PROMPT_RESPONSE).expect("reference prompt parses");
        artifact.provenance = Provenance {
            inputs_fingerprint: "reference".into(),
            created_at_ms: 0,
        };
        artifact
    }

    /// Equality ignoring the creation time.
    pub fn same_content(&self, other: &PromptArtifact) -> bool {
        self.instruction_text == other.instruction_text
            && self.thinking_steps == other.thinking_steps
            && self.correction_templates == other.correction_templates
            && self.affirmation_template == other.affirmation_template
            && self.provenance.inputs_fingerprint == other.provenance.inputs_fingerprint
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))
    }

    /// Loads and validates.
    pub fn load_valid(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let artifact = Self::load(path)?;
        let diags = validate_artifact(&artifact);
        if diags.is_empty() {
            Ok(artifact)
        } else {
            Err(PromptError::InvalidArtifact(diags))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PromptError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDiagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ArtifactDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn slot_res() -> &'static (Regex, Regex) {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    RE.get_or_init(|| {
        (
            Regex::new(r"\[incorrect [^\[\]]+\]").expect("valid regex"),
            Regex::new(r"\[correct [^\[\]]+\]").expect("valid regex"),
        )
    })
}

/// Lists every structural problem with an artifact; empty means valid.
pub fn validate_artifact(artifact: &PromptArtifact) -> Vec<ArtifactDiagnostic> {
    let mut diags = Vec::new();
    let mut push = |field: &str, message: String| {
        diags.push(ArtifactDiagnostic {
            field: field.into(),
            message,
        })
    };

    for ph in [STATEMENT_PLACEHOLDER, CONTEXT_PLACEHOLDER] {
        let n = artifact.instruction_text.matches(ph).count();
        if n != 1 {
            push("instruction_text", format!("placeholder {ph} must occur exactly once, found {n}"));
        }
    }
    let unknown: Vec<String> = residual_placeholders(&artifact.instruction_text)
        .into_iter()
        .filter(|p| p != STATEMENT_PLACEHOLDER && p != CONTEXT_PLACEHOLDER)
        .collect();
    if !unknown.is_empty() {
        push("instruction_text", format!("unknown placeholders {unknown:?}"));
    }
    if artifact.thinking_steps.trim().is_empty() {
        push("thinking_steps", "empty".into());
    }
    if artifact.correction_templates.is_empty() {
        push("correction_templates", "no correction templates".into());
    }
    let (incorrect, correct) = slot_res();
    for (i, t) in artifact.correction_templates.iter().enumerate() {
        if !incorrect.is_match(t) || !correct.is_match(t) {
            push(
                &format!("correction_templates[{i}]"),
                format!("{t:?} lacks an [incorrect ...] / [correct ...] slot pair"),
            );
        }
    }
    if artifact.affirmation_template.trim().is_empty() {
        push("affirmation_template", "empty".into());
    }
    for (field, text) in [
        ("thinking_steps", artifact.thinking_steps.as_str()),
        ("affirmation_template", artifact.affirmation_template.as_str()),
    ] {
        let found = residual_placeholders(text);
        if !found.is_empty() {
            push(field, format!("unexpected placeholders {found:?}"));
        }
    }
    for (i, t) in artifact.correction_templates.iter().enumerate() {
        let found = residual_placeholders(t);
        if !found.is_empty() {
            push(&format!("correction_templates[{i}]"), format!("unexpected placeholders {found:?}"));
        }
    }
    diags
}

fn join_human(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Renders the coach prompt for one statement from a validated artifact.
pub fn render_gcot(statement: &str, context: &str, artifact: &PromptArtifact) -> Result<ChatRequest, PromptError> {
    require(statement, "doctor's statement")?;
    require(context, "medical context")?;
    let diags = validate_artifact(artifact);
    if !diags.is_empty() {
        return Err(PromptError::InvalidArtifact(diags));
    }

    let instruction = fill(
        &artifact.instruction_text,
        &[(STATEMENT_PLACEHOLDER, statement), (CONTEXT_PLACEHOLDER, context)],
    );
    let quoted: Vec<String> = artifact.correction_templates.iter().map(|t| format!("\"{t}\"")).collect();
    let correct_slots: Vec<String> = artifact
        .correction_templates
        .iter()
        .filter_map(|t| slot_res().1.find(t))
        .map(|m| format!("<{}>", &m.as_str()[1..m.as_str().len() - 1]))
        .collect();

    let mut text = format!("Instruction: {instruction}\nThinking steps:\n{}\n", artifact.thinking_steps.trim());
    text.push_str("Feedback:\n");
    text.push_str(&format!(
        "- If Incorrect: Point out the error and provide the correct term from the medical context. Use simple \
         corrections like {}.\n",
        join_human(&quoted).replacen(" and \"", " or \"", 1)
    ));
    text.push_str(&format!("- If Correct: Affirm with \"{}\"\n", artifact.affirmation_template));
    text.push_str(&format!("Note: {} are extracted from medical context", join_human(&correct_slots)));
    Ok(coach_request(text))
}

fn builder_request(body: String) -> ChatRequest {
    ChatRequest::new(BUILDER_SYSTEM_TEXT, vec![ChatMessage::user(body)]).expect("builder prompt is nonempty")
}

/// Step one: asks the model for the variables shared across samples.
pub fn infer_variables(provider: &dyn ChatModel, samples: &[DataSample]) -> Result<GeneralizableVariableSet, PromptError> {
    if samples.len() < 2 {
        return Err(PromptError::Precondition(format!(
            "variable inference needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut body = format!("{INFER_VARIABLES_PROMPT}\n");
    for (i, s) in samples.iter().enumerate() {
        body.push_str(&format!("\nSample {}:\nInput:\n{}\nOutput:\n{}\n", i + 1, s.input.trim(), s.output.trim()));
    }
    let response = provider.complete(&builder_request(body))?;
    parse_variables(&response.text)
}

/// Step two: asks the model for a prompt built on the variables, then
/// parses and validates it.
pub fn generate_gcot_prompt(
    provider: &dyn ChatModel,
    variables: &GeneralizableVariableSet,
) -> Result<PromptArtifact, PromptError> {
    variables.check().map_err(PromptError::Precondition)?;
    let request = builder_request(format!("{GENERATE_PROMPT_PROMPT}\n\n{}", variables.to_text()));
    let response = provider.complete(&request)?;
    let mut artifact = parse_prompt_artifact(&response.text)?;
    artifact.provenance = Provenance {
        inputs_fingerprint: fingerprint(&request),
        created_at_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
    };
    let diags = validate_artifact(&artifact);
    if diags.is_empty() {
        Ok(artifact)
    } else {
        Err(PromptError::InvalidArtifact(diags))
    }
}

/// Strips markdown emphasis and heading marks from a line.
fn plain(line: &str) -> String {
    line.replace("**", "")
        .replace("__", "")
        .trim()
        .trim_start_matches('#')
        .trim()
        .trim_matches('*')
        .trim_matches('_')
        .trim()
        .to_string()
}

fn bullet_body(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for marker in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return Some(rest.trim());
        }
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(rest.trim());
        }
    }
    None
}

/// Parses bulleted family blocks: a `Name:` header followed by an
/// `Incorrect ...` bullet and a `Correct ...` bullet.
pub fn parse_variables(text: &str) -> Result<GeneralizableVariableSet, PromptError> {
    struct Pending {
        name: String,
        incorrect: Option<String>,
        correct: Option<String>,
    }
    let mut families = Vec::new();
    let mut current: Option<Pending> = None;
    let flush = |p: Option<Pending>, families: &mut Vec<VariableFamily>| {
        if let Some(Pending {
            name,
            incorrect: Some(incorrect_slot),
            correct: Some(correct_slot),
        }) = p
        {
            families.push(VariableFamily {
                name,
                incorrect_slot,
                correct_slot,
            });
        }
    };

    for raw in text.lines() {
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(body) = bullet_body(raw) {
            let body = plain(body);
            let lower = body.to_lowercase();
            if let Some(p) = current.as_mut() {
                if lower.starts_with("incorrect") && p.incorrect.is_none() {
                    p.incorrect = Some(body);
                } else if lower.starts_with("correct") && p.correct.is_none() {
                    p.correct = Some(body);
                }
            }
            continue;
        }
        let line = plain(raw);
        if let Some(name) = line.strip_suffix(':') {
            flush(current.take(), &mut families);
            current = Some(Pending {
                name: plain(name),
                incorrect: None,
                correct: None,
            });
        }
    }
    flush(current.take(), &mut families);

    let set = GeneralizableVariableSet { families };
    if set.families.is_empty() {
        return Err(PromptError::Unparseable {
            what: "generalizable variables",
            raw: text.to_string(),
        });
    }
    set.check().map_err(|_| PromptError::Unparseable {
        what: "generalizable variables",
        raw: text.to_string(),
    })?;
    Ok(set)
}

fn quoted_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"["“]([^"“”]+)["”]"#).expect("valid regex"))
}

fn label_rest<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let lower = line.to_lowercase();
    if lower.starts_with(label) {
        line[label.len()..].trim_start().strip_prefix(':').map(str::trim)
    } else {
        None
    }
}

/// Parses a generated prompt into an artifact (provenance left blank).
///
/// Expects `Instruction:`, `Thinking steps:` and `Feedback:` sections. In the
/// feedback section, quoted strings on the affirmation line become the
/// affirmation template and all other quoted strings become correction
/// templates. The artifact is not validated here.
pub fn parse_prompt_artifact(text: &str) -> Result<PromptArtifact, PromptError> {
    let lines: Vec<String> = text.lines().map(plain).collect();
    let unparseable = || PromptError::Unparseable {
        what: "prompt artifact",
        raw: text.to_string(),
    };

    let thinking_at = lines
        .iter()
        .position(|l| label_rest(l, "thinking steps").is_some())
        .ok_or_else(unparseable)?;
    let instruction_at = lines[..thinking_at]
        .iter()
        .position(|l| label_rest(l, "instruction").is_some());

    let mut instruction = Vec::new();
    match instruction_at {
        Some(i) => {
            instruction.push(label_rest(&lines[i], "instruction").unwrap_or_default().to_string());
            instruction.extend(lines[i + 1..thinking_at].iter().cloned());
        }
        None => instruction.extend(lines[..thinking_at].iter().cloned()),
    }
    let instruction_text = instruction
        .iter()
        .filter(|l| !l.is_empty())
        .cloned()
        .collect::<Vec<_>>()
        .join("\n")
        .replace("{doctor’s statement}", STATEMENT_PLACEHOLDER)
        .replace("{Doctor's Statement}", STATEMENT_PLACEHOLDER);

    let after = &lines[thinking_at + 1..];
    let feedback_at = after.iter().position(|l| label_rest(l, "feedback").is_some());
    let (thinking_lines, feedback_lines): (Vec<&String>, Vec<&String>) = match feedback_at {
        Some(f) => (after[..f].iter().collect(), after[f..].iter().collect()),
        None => after.iter().partition(|l| !quoted_re().is_match(l)),
    };

    let mut thinking = Vec::new();
    if let Some(first) = label_rest(&lines[thinking_at], "thinking steps").filter(|r| !r.is_empty()) {
        thinking.push(first.to_string());
    }
    thinking.extend(thinking_lines.into_iter().filter(|l| !l.is_empty()).cloned());

    let mut correction_templates = Vec::new();
    let mut affirmation_template = String::new();
    for line in feedback_lines {
        let lower = line.to_lowercase();
        let spans: Vec<String> = quoted_re()
            .captures_iter(line)
            .map(|c| c[1].trim().to_string())
            .collect();
        if lower.contains("if correct") || lower.contains("affirm") {
            if affirmation_template.is_empty() {
                if let Some(first) = spans.first() {
                    affirmation_template = first.clone();
                }
            }
        } else {
            correction_templates.extend(spans);
        }
    }

    Ok(PromptArtifact {
        instruction_text,
        thinking_steps: thinking.join("\n"),
        correction_templates,
        affirmation_template,
        provenance: Provenance {
            inputs_fingerprint: String::new(),
            created_at_ms: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedProvider;

    fn samples(n: usize) -> Vec<DataSample> {
        (0..n)
            .map(|i| DataSample::from_parts(&format!("statement {i}"), "context", "feedback"))
            .collect()
    }

    #[test]
    fn reference_artifact_is_valid() {
        let a = PromptArtifact::reference();
        assert_eq!(validate_artifact(&a), vec![]);
        assert_eq!(a.correction_templates.len(), 3);
        assert_eq!(
            a.affirmation_template,
            "Your diagnosis/treatment aligns well with the medical context. Good job."
        );
        assert!(a.thinking_steps.starts_with("Identify Key Medical Terms:"));
        assert!(a.thinking_steps.ends_with("- Medication/treatment recommendation."));
    }

    #[test]
    fn reference_artifact_round_trips_through_json() {
        let a = PromptArtifact::reference();
        let back: PromptArtifact = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn render_contains_structure() {
        let r = render_gcot("Take amoxicillin.", "Medications: oseltamivir", &PromptArtifact::reference()).unwrap();
        let text = r.last_text();
        assert!(text.contains("Identify Key Medical Terms"));
        assert!(text.contains("aligns well with the medical context"));
        assert!(text.contains("Take amoxicillin."));
        assert!(text.contains("Medications: oseltamivir"));
        assert!(text.contains("\"Instead of [incorrect symptom], it should be [correct symptom]\""));
        assert!(text.contains("Note: <correct symptom>, <correct medication name> and <correct disease name>"));
        assert!(residual_placeholders(text).is_empty());
    }

    #[test]
    fn render_rejects_missing_context_placeholder() {
        let mut a = PromptArtifact::reference();
        a.instruction_text = a.instruction_text.replace(CONTEXT_PLACEHOLDER, "the context");
        assert!(matches!(render_gcot("s", "c", &a), Err(PromptError::InvalidArtifact(_))));
    }

    #[test]
    fn duplicate_statement_placeholder_is_one_diagnostic() {
        let mut a = PromptArtifact::reference();
        a.instruction_text.push_str(" Repeat: {doctor's statement}");
        assert_eq!(validate_artifact(&a).len(), 1);
    }

    #[test]
    fn template_without_slots_is_one_diagnostic() {
        let mut a = PromptArtifact::reference();
        a.correction_templates.push("Instead of X use Y".into());
        let diags = validate_artifact(&a);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "correction_templates[3]");
    }

    #[test]
    fn parses_reference_variables() {
        let set = parse_variables(REFERENCE_VARIABLES_RESPONSE).unwrap();
        let names: Vec<String> = set.families.iter().map(|f| f.name.to_lowercase()).collect();
        assert_eq!(
            names,
            vec!["condition miscommunication", "medication miscommunication", "treatment miscommunication"]
        );
        assert_eq!(set.families[2].incorrect_slot, "Incorrect treatment advice.");
    }

    #[test]
    fn parses_markdown_variables() {
        let text = "## Variables\n\n**Dosage Miscommunication:**\n1. *Incorrect dose.*\n2. Correct dose per context.\n";
        let set = parse_variables(text).unwrap();
        assert_eq!(set.families.len(), 1);
        assert_eq!(set.families[0].name, "Dosage Miscommunication");
        assert_eq!(set.families[0].incorrect_slot, "Incorrect dose.");
    }

    #[test]
    fn prose_is_unparseable_and_kept() {
        let prose = "The samples share a pattern of medical mistakes.";
        match parse_variables(prose) {
            Err(PromptError::Unparseable { raw, .. }) => assert_eq!(raw, prose),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infer_variables_sends_meta_prompt() {
        let provider = ScriptedProvider::new().with_rule(INFER_VARIABLES_PROMPT, REFERENCE_VARIABLES_RESPONSE);
        let set = infer_variables(&provider, &samples(2)).unwrap();
        assert_eq!(set.families.len(), 3);
        assert!(matches!(infer_variables(&provider, &samples(1)), Err(PromptError::Precondition(_))));
        assert_eq!(provider.calls(), 1);
    }

    #[test]
    fn generate_from_reference_response() {
        let provider = ScriptedProvider::new().with_rule(
            "(1) follow the Chain-of-Thought patterns; (2) ensure reasoning steps are not specific to any data; (3) base reasoning steps on these variables",
            REFERENCE_PROMPT_RESPONSE,
        );
        let vars = parse_variables(REFERENCE_VARIABLES_RESPONSE).unwrap();
        let a = generate_gcot_prompt(&provider, &vars).unwrap();
        let b = generate_gcot_prompt(&provider, &vars).unwrap();
        assert_eq!(a.correction_templates.len(), 3);
        assert!(!a.affirmation_template.is_empty());
        assert!(a.same_content(&b));
        let mut reference = PromptArtifact::reference();
        reference.provenance = a.provenance.clone();
        assert_eq!(a, reference);
    }

    #[test]
    fn generate_rejects_missing_context() {
        let broken = REFERENCE_PROMPT_RESPONSE.replace("{Medical Context}", "the medical context");
        let provider = ScriptedProvider::new().with_fallback(broken);
        let vars = parse_variables(REFERENCE_VARIABLES_RESPONSE).unwrap();
        match generate_gcot_prompt(&provider, &vars) {
            Err(PromptError::InvalidArtifact(d)) => assert!(d[0].message.contains("{Medical Context}")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn curly_apostrophe_placeholder_is_normalized() {
        let text = REFERENCE_PROMPT_RESPONSE.replace("{doctor's statement}", "{doctor’s statement}");
        let a = parse_prompt_artifact(&text).unwrap();
        assert!(a.instruction_text.contains(STATEMENT_PLACEHOLDER));
    }
}
