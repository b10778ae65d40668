use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::ErrorCategory;
use crate::provider::{ChatMessage, ChatModel, ChatRequest};

use super::EvalError;

/// Phrase that marks an affirmation in coach feedback.
pub const AFFIRMATION_MARKER: &str = "aligns well with the medical context";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionCategory {
    Condition,
    Medication,
    Treatment,
    Unknown,
}

impl CorrectionCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectionCategory::Condition => "condition",
            CorrectionCategory::Medication => "medication",
            CorrectionCategory::Treatment => "treatment",
            CorrectionCategory::Unknown => "unknown",
        }
    }
}

impl From<ErrorCategory> for CorrectionCategory {
    fn from(c: ErrorCategory) -> Self {
        match c {
            ErrorCategory::Condition => CorrectionCategory::Condition,
            ErrorCategory::Medication => CorrectionCategory::Medication,
            ErrorCategory::Treatment => CorrectionCategory::Treatment,
        }
    }
}

impl fmt::Display for CorrectionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorrectionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "condition" | "symptom" | "disease" | "diagnosis" => Ok(CorrectionCategory::Condition),
            "medication" | "drug" | "medicine" => Ok(CorrectionCategory::Medication),
            "treatment" | "procedure" => Ok(CorrectionCategory::Treatment),
            "unknown" => Ok(CorrectionCategory::Unknown),
            other => Err(format!("unknown correction category {other:?}")),
        }
    }
}

/// One detected misuse, or an affirmation when nothing was wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub category: CorrectionCategory,
    pub incorrect_term: String,
    pub correct_term: Option<String>,
    #[serde(default)]
    pub affirmation: bool,
}

impl CorrectionRecord {
    pub fn correction(category: CorrectionCategory, incorrect: impl Into<String>, correct: Option<String>) -> Self {
        Self {
            category,
            incorrect_term: incorrect.into(),
            correct_term: correct,
            affirmation: false,
        }
    }

    pub fn affirmation() -> Self {
        Self {
            category: CorrectionCategory::Unknown,
            incorrect_term: String::new(),
            correct_term: None,
            affirmation: true,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match (self.affirmation, self.incorrect_term.trim().is_empty()) {
            (true, false) => Err("affirmation record carries an incorrect term".into()),
            (false, true) => Err("correction record has an empty incorrect term".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    #[default]
    RuleBased,
    ProviderBacked,
}

impl FromStr for Extractor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_based" | "rule-based" => Ok(Extractor::RuleBased),
            "provider_backed" | "provider-backed" => Ok(Extractor::ProviderBacked),
            other => Err(format!("unknown extractor {other:?} (expected rule_based or provider_backed)")),
        }
    }
}

fn correction_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\binstead\s+of\s+([^.!?;\n]+?)\s*,\s*it\s+should\s+be\s+([^.!?;\n]+)").expect("valid regex")
    })
}

fn clean_term(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '“' | '”' | '‘' | '’' | '`' | '*'))
        .to_string()
}

/// Pattern extraction: every "Instead of X, it should be Y" in text order,
/// otherwise a single affirmation record if the affirmation phrase occurs.
pub fn extract_rule_based(feedback: &str) -> Vec<CorrectionRecord> {
    let records: Vec<CorrectionRecord> = correction_re()
        .captures_iter(feedback)
        .filter_map(|c| {
            let incorrect = clean_term(&c[1]);
            let correct = clean_term(&c[2]);
            (!incorrect.is_empty()).then(|| {
                CorrectionRecord::correction(
                    CorrectionCategory::Unknown,
                    incorrect,
                    (!correct.is_empty()).then_some(correct),
                )
            })
        })
        .collect();
    if records.is_empty() && feedback.to_lowercase().contains(AFFIRMATION_MARKER) {
        return vec![CorrectionRecord::affirmation()];
    }
    records
}

/// Non-canonical judge prompt for provider-backed extraction.
pub const EXTRACTION_SYSTEM_TEXT: &str = "You extract medical terminology corrections from coaching feedback.";

pub const EXTRACTION_PROMPT: &str = "Read the coaching feedback below. List every medical term the feedback says \
was used incorrectly, one per line, in the form:\ncategory | incorrect term | correct term\nwhere category is one of \
condition, medication, treatment or unknown. Leave the correct term empty if the feedback gives none. If the feedback \
reports no terminology error, answer with the single word NONE.\n\nFeedback:\n";

/// Parses judge output. `None` means the output did not follow the format.
pub fn parse_judge_output(raw: &str) -> Option<Vec<CorrectionRecord>> {
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() == 1 && lines[0].trim_matches(|c: char| !c.is_alphanumeric()).eq_ignore_ascii_case("none") {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.trim_start_matches(['-', '*', ' ']);
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if parts.len() != 3 {
            continue;
        }
        let Ok(category) = parts[0].parse::<CorrectionCategory>() else {
            continue;
        };
        let incorrect = clean_term(parts[1]);
        if incorrect.is_empty() {
            continue;
        }
        let correct = clean_term(parts[2]);
        out.push(CorrectionRecord::correction(category, incorrect, (!correct.is_empty()).then_some(correct)));
    }
    (!out.is_empty()).then_some(out)
}

/// Extracts corrections with the chosen extractor.
///
/// Provider-backed extraction falls back to the pattern extractor when the
/// judge output cannot be parsed or the provider fails; a provider failure
/// is only reported when the fallback finds nothing either.
pub fn extract_corrections(
    feedback: &str,
    extractor: Extractor,
    provider: Option<&dyn ChatModel>,
) -> Result<Vec<CorrectionRecord>, EvalError> {
    if feedback.trim().is_empty() {
        return Err(EvalError::EmptyText("feedback"));
    }
    match extractor {
        Extractor::RuleBased => Ok(extract_rule_based(feedback)),
        Extractor::ProviderBacked => {
            let provider = provider.ok_or(EvalError::MissingProvider)?;
            let request = ChatRequest::new(
                EXTRACTION_SYSTEM_TEXT,
                vec![ChatMessage::user(format!("{EXTRACTION_PROMPT}{feedback}"))],
            )?;
            match provider.complete(&request) {
                Ok(resp) => match parse_judge_output(&resp.text) {
                    Some(records) if records.is_empty() => Ok(extract_rule_based(feedback)
                        .into_iter()
                        .filter(|r| r.affirmation)
                        .collect()),
                    Some(records) => Ok(records),
                    None => {
                        tracing::debug!("judge output unparseable, using pattern extraction");
                        Ok(extract_rule_based(feedback))
                    }
                },
                Err(err) => {
                    let fallback = extract_rule_based(feedback);
                    if fallback.is_empty() {
                        Err(EvalError::Provider(err))
                    } else {
                        tracing::warn!(error = %err, "judge failed, using pattern extraction");
                        Ok(fallback)
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedProvider;

    #[test]
    fn single_correction() {
        assert_eq!(
            extract_rule_based("Instead of aspirin, it should be ibuprofen."),
            vec![CorrectionRecord::correction(
                CorrectionCategory::Unknown,
                "aspirin",
                Some("ibuprofen".into())
            )]
        );
    }

    #[test]
    fn affirmation_only() {
        let r = extract_rule_based("Your diagnosis/treatment aligns well with the medical context. Good job.");
        assert_eq!(r, vec![CorrectionRecord::affirmation()]);
        assert!(r[0].check().is_ok());
    }

    #[test]
    fn two_in_text_order() {
        let r = extract_rule_based("Instead of flu, it should be pneumonia. Instead of rest, it should be antibiotics.");
        let pairs: Vec<(&str, Option<&str>)> = r
            .iter()
            .map(|c| (c.incorrect_term.as_str(), c.correct_term.as_deref()))
            .collect();
        assert_eq!(pairs, vec![("flu", Some("pneumonia")), ("rest", Some("antibiotics"))]);
    }

    #[test]
    fn quoted_and_case_insensitive() {
        let r = extract_rule_based("You said: \"INSTEAD OF tylenol, IT SHOULD BE acetaminophen\"!");
        assert_eq!(r[0].incorrect_term, "tylenol");
        assert_eq!(r[0].correct_term.as_deref(), Some("acetaminophen"));
    }

    #[test]
    fn nothing_found() {
        assert!(extract_rule_based("Good question to ask about sleep.").is_empty());
        assert!(extract_corrections("  ", Extractor::RuleBased, None).is_err());
    }

    #[test]
    fn judge_output_parsed() {
        let p = ScriptedProvider::new().with_fallback("medication | aspirin | ibuprofen\ncondition | flu |");
        let r = extract_corrections("whatever", Extractor::ProviderBacked, Some(&p)).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].category, CorrectionCategory::Medication);
        assert_eq!(r[1].correct_term, None);
    }

    #[test]
    fn judge_garbage_falls_back() {
        let p = ScriptedProvider::new().with_fallback("I think the doctor did fine overall");
        let r = extract_corrections("Instead of a, it should be b.", Extractor::ProviderBacked, Some(&p)).unwrap();
        assert_eq!(r[0].incorrect_term, "a");
    }

    #[test]
    fn judge_failure_without_fallback_is_error() {
        let p = ScriptedProvider::new();
        assert!(matches!(
            extract_corrections("nothing to see", Extractor::ProviderBacked, Some(&p)),
            Err(EvalError::Provider(_))
        ));
        assert!(matches!(
            extract_corrections("x", Extractor::ProviderBacked, None),
            Err(EvalError::MissingProvider)
        ));
    }
}
