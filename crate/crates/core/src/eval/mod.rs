//! Detection/correction evaluation: feedback extraction, text metrics,
//! run scoring, human-score ingestion and error-category tallies.

mod extract;
mod human;
mod metrics;
mod run;

use thiserror::Error;

use crate::agents::AgentError;
use crate::model::UnknownDisease;
use crate::provider::ProviderError;

pub use extract::{
    extract_corrections, extract_rule_based, parse_judge_output, CorrectionCategory, CorrectionRecord, Extractor,
    AFFIRMATION_MARKER, EXTRACTION_PROMPT,
};
pub use human::{
    aggregate_human_scores, load_human_ratings, read_error_labels, read_human_ratings, tally_error_categories,
    CategoryRate, ErrorCategoryLabel, ErrorTally, FeedbackErrorCategory, HumanRating, HumanScoreSummary,
};
pub use metrics::{bleu2, embedding_score, rouge_l, BLEU_EPSILON};
pub use run::{
    evaluate_run, gold_items, item_id, EvalReport, GoldItem, ItemBreakdown, ItemScores, MetricReport, Prediction,
    StrategyEval, Task, TERM_SEPARATOR,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{0} is empty after tokenization")]
    EmptyText(&'static str),
    #[error("{0} list is empty")]
    EmptyInput(&'static str),
    #[error("provider-backed extraction needs a provider")]
    MissingProvider,
    #[error("embedder failed: {0}")]
    Embedder(#[from] ProviderError),
    #[error("provider failed and pattern extraction found nothing: {0}")]
    Provider(ProviderError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Context(#[from] UnknownDisease),
    #[error("predictions and gold disagree on item ids (missing predictions: {missing_predictions:?}, missing gold: {missing_gold:?})")]
    KeyMismatch {
        missing_predictions: Vec<String>,
        missing_gold: Vec<String>,
    },
    #[error("duplicate item {item_id:?} in {what}")]
    DuplicateItem { what: &'static str, item_id: String },
    #[error("rating for {item_id:?} by {rater_id:?}: {field} = {value} is outside 1..=4")]
    ScoreRange {
        item_id: String,
        rater_id: String,
        field: &'static str,
        value: i64,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{0}")]
    Io(String),
}

impl EvalError {
    pub fn is_provider(&self) -> bool {
        match self {
            EvalError::Provider(_) | EvalError::Embedder(_) => true,
            EvalError::Agent(a) => a.is_provider(),
            _ => false,
        }
    }
}
