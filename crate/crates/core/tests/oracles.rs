//! Metric values checked against independent implementations written here
//! from the definitions, plus hand-computed constants.

use coachsim_core::eval::{
    bleu2, embedding_score, evaluate_run, rouge_l, CorrectionCategory, CorrectionRecord, FeedbackErrorCategory,
    ErrorCategoryLabel, tally_error_categories,
};
use coachsim_core::model::{Annotation, ErrorCategory};
use coachsim_core::provider::{Embedder, HashEmbedder};

fn words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Quadratic BLEU-2: counts every candidate n-gram against a consumable
/// copy of the reference n-gram list.
fn oracle_bleu2(candidate: &str, reference: &str) -> f64 {
    let c = words(candidate);
    let r = words(reference);
    if c.is_empty() {
        return 0.0;
    }
    let mut logs = 0.0;
    for n in 1..=2usize {
        let cand: Vec<&[String]> = if c.len() >= n { c.windows(n).collect() } else { vec![] };
        let mut pool: Vec<Option<&[String]>> =
            if r.len() >= n { r.windows(n).map(Some).collect() } else { vec![] };
        let mut hits = 0.0;
        for g in &cand {
            if let Some(slot) = pool.iter_mut().find(|p| p.as_ref() == Some(g)) {
                *slot = None;
                hits += 1.0;
            }
        }
        let total = cand.len() as f64;
        let p = if hits == 0.0 || total == 0.0 { (hits + 1e-9) / (total + 1e-9) } else { hits / total };
        logs += 0.5 * p.ln();
    }
    let bp = if c.len() >= r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    bp * logs.exp()
}

fn oracle_lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        if let Some(v) = memo.get(&(a.len(), b.len())) {
            return *v;
        }
        let v = if a[0] == b[0] {
            1 + go(&a[1..], &b[1..], memo)
        } else {
            go(&a[1..], b, memo).max(go(a, &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut Default::default())
}

#[test]
fn bleu_hand_value() {
    let got = bleu2("the cat sat", "the cat sat down").unwrap();
    // exp(1 - 4/3) * sqrt(1 * 1)
    assert!((got - 0.716_531_310_573_789_2).abs() < 1e-12, "{got}");
}

#[test]
fn bleu_matches_oracle() {
    let cases = [
        ("the cat sat", "the cat sat down"),
        ("the the the the", "the cat the"),
        ("a b c d e", "a b x d e"),
        ("fever cough fever", "cough fever"),
        ("Aspirin; Ibuprofen", "aspirin ibuprofen naproxen"),
        ("x", "x y z"),
        ("one two three four five six", "one three five"),
        ("aaa bbb", "ccc ddd"),
    ];
    for (c, r) in cases {
        let got = bleu2(c, r).unwrap();
        let want = oracle_bleu2(c, r);
        assert!((got - want).abs() < 1e-12, "{c:?} vs {r:?}: {got} != {want}");
    }
}

#[test]
fn rouge_matches_oracle() {
    let cases = [
        ("the cat sat", "the cat ate"),
        ("a b c d e f", "f e d c b a"),
        ("police killed the gunman", "the gunman killed police"),
        ("x y", "y x y x"),
    ];
    for (c, r) in cases {
        let (wc, wr) = (words(c), words(r));
        let lcs = oracle_lcs(&wc, &wr) as f64;
        let want = if lcs == 0.0 {
            0.0
        } else {
            let (p, rec) = (lcs / wc.len() as f64, lcs / wr.len() as f64);
            2.0 * p * rec / (p + rec)
        };
        let got = rouge_l(c, r).unwrap();
        assert!((got - want).abs() < 1e-12, "{c:?} vs {r:?}");
    }
    assert!((rouge_l("the cat sat", "the cat ate").unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn embedding_brute_force_two_by_one() {
    let e = HashEmbedder::default();
    let v = e.embed(&["fever", "cough"]).unwrap();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |a: &[f64]| dot(a, a).sqrt();
    let sim = dot(&v[0], &v[1]) / (norm(&v[0]) * norm(&v[1]));
    // candidate tokens {fever, cough}, reference {cough}
    let precision = (sim + 1.0) / 2.0;
    let recall = 1.0;
    let want = 2.0 * precision * recall / (precision + recall);
    let got = embedding_score("fever cough", "cough", &e).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

#[test]
fn embedding_shared_token_is_strictly_inside() {
    let e = HashEmbedder::default();
    let v = embedding_score("fever chills malaise", "fever rash", &e).unwrap();
    assert!(v > 0.0 && v < 1.0, "{v}");
}

fn gold(inc: &str, cor: &str) -> Annotation {
    Annotation {
        turn_index: 1,
        category: ErrorCategory::Condition,
        incorrect_term: inc.into(),
        correct_term: cor.into(),
        reference_feedback: String::new(),
    }
}

#[test]
fn two_item_macro_average() {
    let e = HashEmbedder::default();
    let predictions = vec![
        (
            "c1#1".to_string(),
            vec![CorrectionRecord::correction(CorrectionCategory::Unknown, "flu", Some("pneumonia".into()))],
        ),
        ("c2#1".to_string(), vec![]),
    ];
    let gold = vec![
        ("c1#1".to_string(), vec![gold("flu", "pneumonia")]),
        ("c2#1".to_string(), vec![gold("rest", "antibiotics")]),
    ];
    let report = evaluate_run(&predictions, &gold, &e).unwrap();
    for m in [&report.detection, &report.correction] {
        assert!((m.bleu2 - 0.5).abs() < 1e-9);
        assert!((m.rouge_l - 0.5).abs() < 1e-9);
        assert!((m.embed_score - 0.5).abs() < 1e-9);
    }
}

#[test]
fn error_rate_granularity() {
    let labels: Vec<ErrorCategoryLabel> = (0..126)
        .map(|i| ErrorCategoryLabel {
            item_id: format!("i{i}"),
            category: if i < 9 { FeedbackErrorCategory::OverlyDivergentAdvice } else { FeedbackErrorCategory::None },
        })
        .collect();
    let tally = tally_error_categories(&labels).unwrap();
    let rate = tally.rate(FeedbackErrorCategory::OverlyDivergentAdvice).unwrap();
    assert!((rate - 7.14).abs() <= 0.01, "{rate}");
    assert!((rate - 900.0 / 126.0).abs() < 1e-12);
}
