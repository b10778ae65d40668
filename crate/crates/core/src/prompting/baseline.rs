use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{coach_request, fill, require, PromptError};
use crate::model::read_jsonl;
use crate::provider::ChatRequest;

pub const STATEMENT_SLOT: &str = "{doctor's statement}";
pub const CONTEXT_SLOT: &str = "{medical context}";

pub const INSTRUCTION_TEMPLATE: &str = "As a linguistic coach for a junior doctor, evaluate the doctor's statement: \
{doctor's statement} against the given medical context: {medical context}. If there are discrepancies, guide the \
doctor. If not, provide positive feedback.";

pub const VANILLA_COT_TEMPLATE: &str = "As a linguistic coach for a junior doctor, evaluate the doctor's statement: \
{doctor's statement} against the given medical context: {medical context}. You should provide your response based \
on the following examples of input, thinking steps and output.";

pub const STEP_BY_STEP: &str = "Please think step by step.";

pub const MAX_EXEMPLARS: usize = 5;

/// One worked example for few-shot chain-of-thought.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub doctor_statement: String,
    pub medical_context: String,
    pub thinking_steps: String,
    pub coach_feedback: String,
}

impl Exemplar {
    fn check(&self, index: usize) -> Result<(), PromptError> {
        let fields = [
            ("doctor_statement", &self.doctor_statement),
            ("medical_context", &self.medical_context),
            ("thinking_steps", &self.thinking_steps),
            ("coach_feedback", &self.coach_feedback),
        ];
        for (field, value) in fields {
            if value.trim().is_empty() {
                return Err(PromptError::EmptyExemplarField { index, field });
            }
        }
        Ok(())
    }
}

/// Reads exemplars from a JSON-lines file.
pub fn load_exemplars(path: impl AsRef<Path>) -> Result<Vec<Exemplar>, PromptError> {
    read_jsonl(path.as_ref()).map_err(|e| PromptError::Io(e.to_string()))
}

fn instruction_text(statement: &str, context: &str) -> Result<String, PromptError> {
    require(statement, "doctor's statement")?;
    require(context, "medical context")?;
    Ok(fill(INSTRUCTION_TEMPLATE, &[(STATEMENT_SLOT, statement), (CONTEXT_SLOT, context)]))
}

/// Plain instruction prompting: the template with both slots filled.
pub fn render_instruction(statement: &str, context: &str) -> Result<ChatRequest, PromptError> {
    instruction_text(statement, context).map(coach_request)
}

/// The instruction prompt followed by "Please think step by step."
pub fn render_zero_shot_cot(statement: &str, context: &str) -> Result<ChatRequest, PromptError> {
    let text = instruction_text(statement, context)?;
    Ok(coach_request(format!("{text} {STEP_BY_STEP}")))
}

/// Few-shot chain-of-thought: each exemplar as Input / Thinking steps /
/// Output blocks, then the query's Input block.
pub fn render_vanilla_cot(statement: &str, context: &str, exemplars: &[Exemplar]) -> Result<ChatRequest, PromptError> {
    require(statement, "doctor's statement")?;
    require(context, "medical context")?;
    if exemplars.is_empty() || exemplars.len() > MAX_EXEMPLARS {
        return Err(PromptError::ExemplarCount(exemplars.len()));
    }
    for (i, ex) in exemplars.iter().enumerate() {
        ex.check(i)?;
    }

    let mut text = fill(VANILLA_COT_TEMPLATE, &[(STATEMENT_SLOT, statement), (CONTEXT_SLOT, context)]);
    for (i, ex) in exemplars.iter().enumerate() {
        text.push_str(&format!(
            "\n\nExample {}:\nInput:\n{}\n{}\nThinking steps:\n{}\nOutput:\n{}",
            i + 1,
            ex.doctor_statement.trim(),
            ex.medical_context.trim(),
            ex.thinking_steps.trim(),
            ex.coach_feedback.trim(),
        ));
    }
    text.push_str(&format!("\n\nInput:\n{}\n{}", statement.trim(), context.trim()));
    Ok(coach_request(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::residual_placeholders;

    fn exemplar(tag: &str) -> Exemplar {
        Exemplar {
            doctor_statement: format!("statement {tag}"),
            medical_context: format!("context {tag}"),
            thinking_steps: format!("steps {tag}"),
            coach_feedback: format!("feedback {tag}"),
        }
    }

    #[test]
    fn instruction_contains_inputs_verbatim() {
        let r = render_instruction("I think it's flu", "influenza context").unwrap();
        let text = r.last_text();
        assert!(text.contains("I think it's flu"));
        assert!(text.contains("influenza context"));
        assert!(text.contains("evaluate the doctor's statement"));
        assert!(text.ends_with("If not, provide positive feedback."));
        assert!(residual_placeholders(text).is_empty());
        assert_eq!(r.messages.len(), 1);
    }

    #[test]
    fn instruction_is_deterministic() {
        let a = render_instruction("s", "c").unwrap();
        let b = render_instruction("s", "c").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn zero_shot_appends_step_by_step() {
        let base = render_instruction("s", "c").unwrap();
        let zs = render_zero_shot_cot("s", "c").unwrap();
        assert!(zs.last_text().ends_with("Please think step by step."));
        assert_eq!(zs.last_text(), format!("{} Please think step by step.", base.last_text()));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert_eq!(render_zero_shot_cot("s", ""), Err(PromptError::EmptyInput("medical context")));
        assert_eq!(render_instruction(" ", "c"), Err(PromptError::EmptyInput("doctor's statement")));
    }

    #[test]
    fn vanilla_cot_blocks() {
        let exs = [exemplar("a"), exemplar("b"), exemplar("c")];
        let r = render_vanilla_cot("query statement", "query context", &exs).unwrap();
        let text = r.last_text();
        let final_input = text.rfind("\n\nInput:\n").unwrap();
        assert_eq!(text[..final_input].matches("Thinking steps:").count(), 3);
        assert!(text[final_input..].contains("query statement"));
        assert!(text.find("Example 1:").unwrap() < text.find("Example 2:").unwrap());
    }

    #[test]
    fn vanilla_cot_order_matters() {
        let ab = render_vanilla_cot("s", "c", &[exemplar("a"), exemplar("b")]).unwrap();
        let ba = render_vanilla_cot("s", "c", &[exemplar("b"), exemplar("a")]).unwrap();
        assert_ne!(ab.fingerprint(), ba.fingerprint());
    }

    #[test]
    fn vanilla_cot_preconditions() {
        assert_eq!(render_vanilla_cot("s", "c", &[]), Err(PromptError::ExemplarCount(0)));
        let six = vec![exemplar("x"); 6];
        assert_eq!(render_vanilla_cot("s", "c", &six), Err(PromptError::ExemplarCount(6)));
        let mut bad = exemplar("x");
        bad.thinking_steps.clear();
        assert_eq!(
            render_vanilla_cot("s", "c", &[exemplar("a"), bad]),
            Err(PromptError::EmptyExemplarField { index: 1, field: "thinking_steps" })
        );
    }
}
