#![allow(dead_code)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use coachsim_core::provider::{Embedder, HashEmbedder};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process.
pub fn coachsim<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let mut argv: Vec<OsString> = vec!["coachsim".into()];
    argv.extend(args.into_iter().map(Into::into));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = coachsim_cli::run_with(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Knowledge base, scenarios and the scripted fixture provider.
pub fn scripted_flags() -> Vec<OsString> {
    vec![
        "--kb".into(),
        fixture("kb.jsonl").into(),
        "--scenarios".into(),
        fixture("scenarios.jsonl").into(),
        "--provider".into(),
        "scripted".into(),
        "--script".into(),
        fixture("script.jsonl").into(),
    ]
}

pub fn args(base: Vec<OsString>, rest: &[&dyn AsRef<std::ffi::OsStr>]) -> Vec<OsString> {
    let mut v = base;
    v.extend(rest.iter().map(|a| a.as_ref().to_os_string()));
    v
}

pub fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// BLEU-2 from the definition: clipped counts via a consumable pool,
/// add-epsilon smoothing on zero counts, brevity penalty.
pub fn oracle_bleu2(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (words(candidate), words(reference));
    if c.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=2 {
        let cand: Vec<Vec<String>> = c.windows(n).map(|w| w.to_vec()).collect();
        let mut pool: Vec<Vec<String>> = r.windows(n).map(|w| w.to_vec()).collect();
        let mut hits = 0usize;
        for g in &cand {
            if let Some(i) = pool.iter().position(|p| p == g) {
                pool.swap_remove(i);
                hits += 1;
            }
        }
        let (m, t) = (hits as f64, cand.len() as f64);
        let p = if hits == 0 || cand.is_empty() { (m + 1e-9) / (t + 1e-9) } else { m / t };
        log_sum += p.ln() / 2.0;
    }
    let bp = (1.0 - r.len() as f64 / c.len() as f64).min(0.0).exp();
    bp * log_sum.exp()
}

/// ROUGE-L F1 with a full dynamic-programming LCS table.
pub fn oracle_rouge_l(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (words(candidate), words(reference));
    let mut t = vec![vec![0usize; r.len() + 1]; c.len() + 1];
    for i in 1..=c.len() {
        for j in 1..=r.len() {
            t[i][j] = if c[i - 1] == r[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    let lcs = t[c.len()][r.len()] as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let (p, rec) = (lcs / c.len() as f64, lcs / r.len() as f64);
    2.0 * p * rec / (p + rec)
}

/// Greedy token matching over per-token embeddings, each token embedded
/// on its own.
pub fn oracle_embed(candidate: &str, reference: &str) -> f64 {
    let e = HashEmbedder::default();
    let vec_of = |w: &str| e.embed(&[w]).unwrap().remove(0);
    let sim = |a: &str, b: &str| {
        if a == b {
            return 1.0;
        }
        let (x, y) = (vec_of(a), vec_of(b));
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let n = |v: &[f64]| v.iter().map(|z| z * z).sum::<f64>().sqrt();
        dot / (n(&x) * n(&y))
    };
    let (c, r) = (words(candidate), words(reference));
    let best = |from: &[String], to: &[String]| {
        from.iter()
            .map(|a| to.iter().map(|b| sim(a, b)).fold(f64::MIN, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    let (p, rec) = (best(&c, &r), best(&r, &c));
    (2.0 * p * rec / (p + rec)).clamp(-1.0, 1.0)
}
