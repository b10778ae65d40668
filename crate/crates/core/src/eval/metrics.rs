use std::collections::HashMap;

use crate::provider::{cosine, Embedder};
use crate::text::tokenize;

use super::EvalError;

/// Smoothing constant for zero n-gram counts.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram precision as (matched, total).
fn clipped_precision(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(gram, count)| (*count).min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

fn smoothed(matched: usize, total: usize) -> f64 {
    if matched == 0 || total == 0 {
        (matched as f64 + BLEU_EPSILON) / (total as f64 + BLEU_EPSILON)
    } else {
        matched as f64 / total as f64
    }
}

/// Sentence-level BLEU with uniform weights over unigrams and bigrams.
pub fn bleu2(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let reference = tokenize(reference);
    if reference.is_empty() {
        return Err(EvalError::EmptyText("reference"));
    }
    let candidate = tokenize(candidate);
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let (m1, t1) = clipped_precision(&candidate, &reference, 1);
    let (m2, t2) = clipped_precision(&candidate, &reference, 2);
    let p1 = smoothed(m1, t1);
    let p2 = smoothed(m2, t2);
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = (1.0 - r / c).min(0.0).exp();
    Ok((bp * (p1 * p2).sqrt()).clamp(0.0, 1.0))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (beta = 1) over tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let candidate = tokenize(candidate);
    let reference = tokenize(reference);
    if candidate.is_empty() {
        return Err(EvalError::EmptyText("candidate"));
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyText("reference"));
    }
    let lcs = lcs_len(&candidate, &reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Greedy token matching over embeddings: every token is embedded on its
/// own, precision averages each candidate token's best cosine against the
/// reference and recall the reverse. No idf weights, no rescaling.
pub fn embedding_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, EvalError> {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() {
        return Err(EvalError::EmptyText("candidate"));
    }
    if refr.is_empty() {
        return Err(EvalError::EmptyText("reference"));
    }

    let mut vocab: Vec<&str> = cand.iter().chain(&refr).map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    let vectors = embedder.embed(&vocab)?;
    if vectors.len() != vocab.len() {
        return Err(EvalError::Embedder(crate::provider::ProviderError::InvalidResponse(format!(
            "embedder returned {} vectors for {} tokens",
            vectors.len(),
            vocab.len()
        ))));
    }
    let lookup: HashMap<&str, &Vec<f64>> = vocab.iter().copied().zip(&vectors).collect();

    let greedy = |from: &[String], to: &[String]| -> f64 {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| if a == b { 1.0 } else { cosine(lookup[a.as_str()], lookup[b.as_str()]) })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    let precision = greedy(&cand, &refr);
    let recall = greedy(&refr, &cand);
    let denom = precision + recall;
    if denom.abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok((2.0 * precision * recall / denom).clamp(-1.0, 1.0))
}
