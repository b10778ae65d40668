use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::CoachAgent;
use crate::model::{assemble_medical_context, Annotation, ConversationRecord, DialogueHistory, KnowledgeBase};
use crate::provider::{ChatModel, Embedder};

use super::extract::{extract_corrections, CorrectionRecord, Extractor};
use super::metrics::{bleu2, embedding_score, rouge_l};
use super::EvalError;

/// Separator used when several terms of one item are compared at once.
pub const TERM_SEPARATOR: &str = "; ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Detection,
    Correction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub bleu2: f64,
    pub rouge_l: f64,
    pub embed_score: f64,
}

impl ItemScores {
    const PERFECT: ItemScores = ItemScores {
        bleu2: 1.0,
        rouge_l: 1.0,
        embed_score: 1.0,
    };
    const ZERO: ItemScores = ItemScores {
        bleu2: 0.0,
        rouge_l: 0.0,
        embed_score: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub bleu2: f64,
    pub rouge_l: f64,
    pub embed_score: f64,
    pub n_items: usize,
}

impl fmt::Display for MetricReport {
    /// Scores are stored in [0,1] and shown ×100.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let task = match self.task {
            Task::Detection => "detection",
            Task::Correction => "correction",
        };
        write!(
            f,
            "{task:<10} BLEU-2 {:6.2}  ROUGE-L {:6.2}  Embed {:6.2}  (n={})",
            self.bleu2 * 100.0,
            self.rouge_l * 100.0,
            self.embed_score * 100.0,
            self.n_items
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBreakdown {
    pub item_id: String,
    pub detection: ItemScores,
    pub correction: ItemScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detection: MetricReport,
    pub correction: MetricReport,
    pub items: Vec<ItemBreakdown>,
}

fn score_pair(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<ItemScores, EvalError> {
    match (candidate.trim().is_empty(), reference.trim().is_empty()) {
        (true, true) => Ok(ItemScores::PERFECT),
        (_, true) | (true, _) => Ok(ItemScores::ZERO),
        _ => Ok(ItemScores {
            bleu2: bleu2(candidate, reference)?,
            rouge_l: rouge_l(candidate, reference)?,
            embed_score: embedding_score(candidate, reference, embedder)?,
        }),
    }
}

fn score_item(
    predicted: &[CorrectionRecord],
    gold: &[Annotation],
    embedder: &dyn Embedder,
) -> Result<(ItemScores, ItemScores), EvalError> {
    let corrections: Vec<&CorrectionRecord> = predicted.iter().filter(|r| !r.affirmation).collect();
    let det_cand = corrections.iter().map(|r| r.incorrect_term.as_str()).collect::<Vec<_>>().join(TERM_SEPARATOR);
    let cor_cand = corrections
        .iter()
        .filter_map(|r| r.correct_term.as_deref())
        .collect::<Vec<_>>()
        .join(TERM_SEPARATOR);
    let det_ref = gold.iter().map(|a| a.incorrect_term.as_str()).collect::<Vec<_>>().join(TERM_SEPARATOR);
    let cor_ref = gold.iter().map(|a| a.correct_term.as_str()).collect::<Vec<_>>().join(TERM_SEPARATOR);

    if gold.is_empty() {
        // No error to find: any reported correction is a false alarm.
        let s = if corrections.is_empty() { ItemScores::PERFECT } else { ItemScores::ZERO };
        return Ok((s, s));
    }
    Ok((
        score_pair(&det_cand, &det_ref, embedder)?,
        score_pair(&cor_cand, &cor_ref, embedder)?,
    ))
}

fn keyed<'a, T>(items: &'a [(String, T)], what: &'static str) -> Result<BTreeMap<&'a str, &'a T>, EvalError> {
    let mut map = BTreeMap::new();
    for (id, v) in items {
        if map.insert(id.as_str(), v).is_some() {
            return Err(EvalError::DuplicateItem {
                what,
                item_id: id.clone(),
            });
        }
    }
    Ok(map)
}

fn macro_average(task: Task, scores: &[ItemScores]) -> MetricReport {
    let n = scores.len();
    let mean = |f: fn(&ItemScores) -> f64| if n == 0 { 0.0 } else { scores.iter().map(f).sum::<f64>() / n as f64 };
    MetricReport {
        task,
        bleu2: mean(|s| s.bleu2),
        rouge_l: mean(|s| s.rouge_l),
        embed_score: mean(|s| s.embed_score),
        n_items: n,
    }
}

/// Scores predictions against gold annotations, macro-averaged over items
/// in sorted item-id order.
pub fn evaluate_run(
    predictions: &[(String, Vec<CorrectionRecord>)],
    gold: &[(String, Vec<Annotation>)],
    embedder: &dyn Embedder,
) -> Result<EvalReport, EvalError> {
    let pred = keyed(predictions, "predictions")?;
    let gold = keyed(gold, "gold")?;
    let pk: BTreeSet<&str> = pred.keys().copied().collect();
    let gk: BTreeSet<&str> = gold.keys().copied().collect();
    if pk != gk {
        return Err(EvalError::KeyMismatch {
            missing_predictions: gk.difference(&pk).map(|s| s.to_string()).collect(),
            missing_gold: pk.difference(&gk).map(|s| s.to_string()).collect(),
        });
    }

    let ids: Vec<&str> = gk.into_iter().collect();
    let items = ids
        .par_iter()
        .map(|id| {
            let (detection, correction) = score_item(pred[id], gold[id], embedder)?;
            Ok(ItemBreakdown {
                item_id: id.to_string(),
                detection,
                correction,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let det: Vec<ItemScores> = items.iter().map(|i| i.detection).collect();
    let cor: Vec<ItemScores> = items.iter().map(|i| i.correction).collect();
    Ok(EvalReport {
        detection: macro_average(Task::Detection, &det),
        correction: macro_average(Task::Correction, &cor),
        items,
    })
}

pub fn item_id(conversation_id: &str, turn_index: usize) -> String {
    format!("{conversation_id}#{turn_index}")
}

/// One doctor statement to evaluate, with its gold annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldItem<'a> {
    pub item_id: String,
    pub record: &'a ConversationRecord,
    pub turn_index: usize,
    pub annotations: Vec<Annotation>,
}

/// Evaluation items of a dataset: annotated doctor turns, plus the
/// unannotated ones when `include_nonlingual` is set.
pub fn gold_items(records: &[ConversationRecord], include_nonlingual: bool) -> Vec<GoldItem<'_>> {
    let mut out = Vec::new();
    for record in records {
        for turn in record.turns.iter().filter(|t| t.role.is_doctor()) {
            let annotations: Vec<Annotation> = record.annotations_for(turn.index).cloned().collect();
            if annotations.is_empty() && !include_nonlingual {
                continue;
            }
            out.push(GoldItem {
                item_id: item_id(&record.conversation_id, turn.index),
                record,
                turn_index: turn.index,
                annotations,
            });
        }
    }
    out
}

/// Coach output and extracted corrections for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default)]
    pub records: Vec<CorrectionRecord>,
}

pub struct StrategyEval<'a> {
    pub coach: &'a CoachAgent,
    pub coach_provider: &'a dyn ChatModel,
    pub extractor: Extractor,
    pub judge: Option<&'a dyn ChatModel>,
    pub embedder: &'a dyn Embedder,
}

impl StrategyEval<'_> {
    /// Runs the coach on every gold item (with the history before that
    /// turn), extracts corrections and scores them.
    pub fn run(&self, kb: &KnowledgeBase, items: &[GoldItem<'_>]) -> Result<(Vec<Prediction>, EvalReport), EvalError> {
        let predictions = items
            .par_iter()
            .map(|item| {
                let record = item.record;
                let context = assemble_medical_context(&record.scenario, kb)?;
                let prior = DialogueHistory::from_turns(record.turns[..item.turn_index].to_vec())
                    .map_err(EvalError::Dataset)?;
                let statement = &record.turns[item.turn_index];
                let feedback = self
                    .coach
                    .feedback_with_context(self.coach_provider, &context, statement, &prior)?;
                let records = extract_corrections(&feedback.text, self.extractor, self.judge)?;
                Ok(Prediction {
                    item_id: item.item_id.clone(),
                    feedback: Some(feedback.text),
                    records,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let keyed_pred: Vec<(String, Vec<CorrectionRecord>)> =
            predictions.iter().map(|p| (p.item_id.clone(), p.records.clone())).collect();
        let keyed_gold: Vec<(String, Vec<Annotation>)> =
            items.iter().map(|i| (i.item_id.clone(), i.annotations.clone())).collect();
        let report = evaluate_run(&keyed_pred, &keyed_gold, self.embedder)?;
        Ok((predictions, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::extract::CorrectionCategory;
    use crate::model::ErrorCategory;
    use crate::provider::HashEmbedder;

    fn gold(inc: &str, cor: &str) -> Annotation {
        Annotation {
            turn_index: 1,
            category: ErrorCategory::Medication,
            incorrect_term: inc.into(),
            correct_term: cor.into(),
            reference_feedback: String::new(),
        }
    }

    fn pred(inc: &str, cor: &str) -> CorrectionRecord {
        CorrectionRecord::correction(CorrectionCategory::Unknown, inc, Some(cor.into()))
    }

    #[test]
    fn perfect_and_empty_average_to_half() {
        let e = HashEmbedder::default();
        let p = vec![("a".to_string(), vec![pred("aspirin", "ibuprofen")]), ("b".to_string(), vec![])];
        let g = vec![
            ("a".to_string(), vec![gold("aspirin", "ibuprofen")]),
            ("b".to_string(), vec![gold("flu", "pneumonia")]),
        ];
        let r = evaluate_run(&p, &g, &e).unwrap();
        for m in [&r.detection, &r.correction] {
            assert!((m.bleu2 - 0.5).abs() < 1e-9);
            assert!((m.rouge_l - 0.5).abs() < 1e-9);
            assert!((m.embed_score - 0.5).abs() < 1e-9);
            assert_eq!(m.n_items, 2);
        }
    }

    #[test]
    fn affirmation_on_clean_item_is_perfect() {
        let e = HashEmbedder::default();
        let r = evaluate_run(
            &[("x".into(), vec![CorrectionRecord::affirmation()])],
            &[("x".into(), vec![])],
            &e,
        )
        .unwrap();
        assert_eq!(r.detection.bleu2, 1.0);
        let r = evaluate_run(&[("x".into(), vec![pred("a", "b")])], &[("x".into(), vec![])], &e).unwrap();
        assert_eq!(r.detection.rouge_l, 0.0);
    }

    #[test]
    fn key_mismatch_rejected() {
        let e = HashEmbedder::default();
        let err = evaluate_run(&[("x".into(), vec![])], &[("y".into(), vec![])], &e).unwrap_err();
        assert!(matches!(err, EvalError::KeyMismatch { .. }));
        let err = evaluate_run(&[("x".into(), vec![]), ("x".into(), vec![])], &[("x".into(), vec![])], &e);
        assert!(matches!(err, Err(EvalError::DuplicateItem { .. })));
    }

    #[test]
    fn multiple_terms_joined_in_order() {
        let e = HashEmbedder::default();
        let p = vec![("a".to_string(), vec![pred("flu", "pneumonia"), pred("rest", "antibiotics")])];
        let g = vec![("a".to_string(), vec![gold("flu", "pneumonia"), gold("rest", "antibiotics")])];
        let r = evaluate_run(&p, &g, &e).unwrap();
        assert!((r.correction.bleu2 - 1.0).abs() < 1e-9);
        let swapped = vec![("a".to_string(), vec![pred("rest", "antibiotics"), pred("flu", "pneumonia")])];
        let r = evaluate_run(&swapped, &g, &e).unwrap();
        assert!(r.detection.rouge_l < 1.0);
    }
}
