use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use coachsim_core::datagen::{
    filter_dataset, load_seed_queries, record_agreement, AgentProviders, AgreementReport, AgreementScorer,
    DatagenTally, GenerationConfig, Generator, RetentionSummary,
};
use coachsim_core::eval::{
    aggregate_human_scores, gold_items, load_human_ratings, read_error_labels, tally_error_categories, Extractor,
    ItemBreakdown, MetricReport, Prediction, StrategyEval,
};
use coachsim_core::model::{
    load_dataset, read_jsonl, validate_conversation, validate_conversation_structure, write_jsonl, ConversationRecord,
    Diagnostic, Role,
};
use coachsim_core::prompting::{
    generate_gcot_prompt, infer_variables, load_exemplars, DataSample, StrategyKind,
};
use coachsim_core::provider::ProviderMode;
use coachsim_core::stats::dataset_stats;
use coachsim_service::{ServiceSetup, SessionManager, SessionStore};
use serde::Serialize;

use crate::config::CliConfig;
use crate::error::CliError;

/// Resolved settings plus the output streams of one invocation.
pub struct Context<'a> {
    pub config: CliConfig,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

impl Context<'_> {
    fn print(&mut self, text: impl std::fmt::Display) -> Result<(), CliError> {
        writeln!(self.stdout, "{text}").map_err(|e| CliError::io("stdout", e))
    }

    fn note(&mut self, text: impl std::fmt::Display) {
        let _ = writeln!(self.stderr, "{text}");
    }

    /// `--out` if given, else `name` inside the configured output directory.
    fn out_path(&self, name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.config.out_dir().join(name))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn report_diagnostics(ctx: &mut Context<'_>, id: &str, diags: &[Diagnostic]) -> bool {
    for d in diags {
        ctx.note(format!("{id}: {d}"));
    }
    !diags.is_empty()
}

pub fn gcot_build(ctx: &mut Context<'_>, samples: &Path) -> Result<(), CliError> {
    let samples: Vec<DataSample> = read_jsonl(samples)?;
    if samples.len() < 2 {
        return Err(CliError::Validation(format!(
            "precondition failed: variable inference needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let chat = ctx.config.chat()?;
    let variables = infer_variables(chat.as_ref(), &samples)?;
    ctx.print(variables.to_text())?;
    let artifact = generate_gcot_prompt(chat.as_ref(), &variables)?;
    let path = ctx.out_path("gcot_artifact.json");
    write_file(&path, artifact.to_json().as_bytes())?;
    ctx.note(format!("wrote prompt artifact to {}", path.display()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalEcho {
    dataset: String,
    strategy: StrategyKind,
    extractor: Extractor,
    include_nonlingual: bool,
    provider: ProviderMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    artifact_fingerprint: Option<String>,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    config: EvalEcho,
    detection: MetricReport,
    correction: MetricReport,
    items: Vec<ItemBreakdown>,
    predictions: Vec<Prediction>,
}

pub fn eval(
    ctx: &mut Context<'_>,
    dataset: &Path,
    strategy: StrategyKind,
    extractor: Extractor,
    include_nonlingual: bool,
) -> Result<(), CliError> {
    let kb = ctx.config.knowledge_base()?;
    let coach = ctx.config.coach(strategy)?;
    let records = load_dataset(dataset)?;
    let mut invalid = false;
    for r in &records {
        invalid |= report_diagnostics(ctx, &r.conversation_id, &validate_conversation(r, &kb));
    }
    if invalid {
        return Err(CliError::Validation(format!("{} failed validation", dataset.display())));
    }

    let chat = ctx.config.chat()?;
    let embedder = ctx.config.embedder()?;
    let items = gold_items(&records, include_nonlingual);
    let runner = StrategyEval {
        coach: &coach,
        coach_provider: chat.as_ref(),
        extractor,
        judge: matches!(extractor, Extractor::ProviderBacked).then_some(chat.as_ref()),
        embedder: embedder.as_ref(),
    };
    let (predictions, report) = runner.run(&kb, &items)?;
    let output = EvalOutput {
        config: EvalEcho {
            dataset: dataset.display().to_string(),
            strategy,
            extractor,
            include_nonlingual,
            provider: ctx.config.provider.mode,
            artifact_fingerprint: coach.artifact.as_ref().map(|a| a.provenance.inputs_fingerprint.clone()),
        },
        detection: report.detection,
        correction: report.correction,
        items: report.items,
        predictions,
    };
    let json = pretty(&output);
    match ctx.out.clone() {
        Some(path) => {
            write_file(&path, json.as_bytes())?;
            ctx.print(&output.detection)?;
            ctx.print(&output.correction)?;
            ctx.note(format!("wrote report to {}", path.display()));
        }
        None => ctx.print(json.trim_end())?,
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FailureLine {
    index: usize,
    seed_query: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct DatagenSummary {
    config: GenerationConfig,
    strategy: StrategyKind,
    tally: DatagenTally,
    retention: RetentionSummary,
    failures: Vec<FailureLine>,
}

pub fn datagen(
    ctx: &mut Context<'_>,
    generation: &Path,
    seeds: &Path,
    strategy: StrategyKind,
    judge_agreement: bool,
) -> Result<(), CliError> {
    let mut config = GenerationConfig::load(generation)?;
    if let Some(seed) = ctx.seed {
        config.rng_seed = seed;
    }
    let seeds = load_seed_queries(seeds)?;
    let kb = ctx.config.knowledge_base()?;
    let coach = ctx.config.coach(strategy)?;
    let chat = ctx.config.chat()?;
    let generator = Generator::new(&kb, &config, AgentProviders::uniform(chat.as_ref()), &coach)?;
    let run = generator.generate_dataset(&seeds);

    for f in &run.failures {
        ctx.note(format!("seed {} ({:?}) failed: {}", f.index, f.seed_query, f.error));
    }
    if run.conversations.is_empty() {
        if let Some(first) = run.failures.first() {
            return Err(first.error.clone().into());
        }
    }

    let scorer = if judge_agreement {
        AgreementScorer::Judge(chat.as_ref())
    } else {
        AgreementScorer::TokenF1
    };
    let mut scored: Vec<(ConversationRecord, AgreementReport)> = Vec::with_capacity(run.conversations.len());
    for c in run.conversations {
        let report = record_agreement(&c.record, &kb, scorer)?;
        scored.push((c.record, report));
    }
    let reports: Vec<AgreementReport> = scored.iter().map(|(_, r)| r.clone()).collect();
    let (kept, retention) = filter_dataset(scored, config.agreement_threshold)?;

    let dir = ctx.out.clone().unwrap_or_else(|| ctx.config.out_dir());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
    write_jsonl(&dir.join("dataset.jsonl"), &kept)?;
    write_jsonl(&dir.join("agreement.jsonl"), &reports)?;
    let summary = DatagenSummary {
        config,
        strategy,
        tally: run.tally,
        retention,
        failures: run
            .failures
            .iter()
            .map(|f| FailureLine {
                index: f.index,
                seed_query: f.seed_query.clone(),
                error: f.error.to_string(),
            })
            .collect(),
    };
    write_file(&dir.join("datagen_summary.json"), pretty(&summary).as_bytes())?;

    ctx.print(dataset_stats(&kept))?;
    ctx.print(format!(
        "kept {} of {} conversations (agreement >= {})",
        summary.retention.kept, summary.retention.total, summary.retention.threshold
    ))?;
    ctx.note(format!("wrote dataset to {}", dir.display()));
    Ok(())
}

pub fn stats(ctx: &mut Context<'_>, dataset: &Path) -> Result<(), CliError> {
    let records = load_dataset(dataset)?;
    let kb = match ctx.config.knowledge_base {
        Some(_) => Some(ctx.config.knowledge_base()?),
        None => None,
    };
    let mut invalid = false;
    for r in &records {
        let diags = match &kb {
            Some(kb) => validate_conversation(r, kb),
            None => validate_conversation_structure(r),
        };
        invalid |= report_diagnostics(ctx, &r.conversation_id, &diags);
    }
    if invalid {
        return Err(CliError::Validation(format!("{} failed validation", dataset.display())));
    }
    let stats = dataset_stats(&records);
    if let Some(path) = ctx.out.clone() {
        write_file(&path, pretty(&stats).as_bytes())?;
    }
    ctx.print(stats)
}

/// Re-runs the learner turns of a session transcript against fresh agents
/// and checks the result turn by turn. The output keeps the original
/// conversation id and timestamps, so a faithful replay is byte-identical
/// to its input.
pub fn replay(ctx: &mut Context<'_>, transcript: &Path, strategy: StrategyKind) -> Result<(), CliError> {
    let text = std::fs::read_to_string(transcript).map_err(|e| CliError::io(transcript.display(), e))?;
    let original: ConversationRecord = serde_json::from_str(text.trim_end())
        .map_err(|e| CliError::Validation(format!("{}: {e}", transcript.display())))?;
    if let Some(t) = original.turns.iter().find(|t| t.role == Role::DoctorAgent) {
        return Err(CliError::Validation(format!(
            "turn {} is a doctor_agent turn; only learner session transcripts can be replayed",
            t.index
        )));
    }

    let exemplars = match &ctx.config.exemplars {
        Some(p) if strategy == StrategyKind::VanillaCot => load_exemplars(p)?,
        _ => Vec::new(),
    };
    let chat = ctx.config.chat()?;
    let manager = SessionManager::new(ServiceSetup {
        kb: ctx.config.knowledge_base()?,
        scenarios: vec![original.scenario.clone()],
        artifact: ctx.config.artifact()?,
        exemplars,
        patient_provider: chat.clone(),
        coach_provider: chat,
        store: None,
    })?;
    let id = manager.create_session(&original.scenario.scenario_id, strategy)?.session_id;
    for turn in original.turns.iter().filter(|t| t.role == Role::Learner) {
        manager.post_utterance(&id, &turn.text)?;
    }
    let mut replayed = manager.get_transcript(&id)?;
    replayed.conversation_id = original.conversation_id.clone();
    for (r, o) in replayed.turns.iter_mut().zip(&original.turns) {
        r.timestamp = o.timestamp;
    }

    let json = serde_json::to_string(&replayed).expect("transcript serializes") + "\n";
    match ctx.out.clone() {
        Some(path) => write_file(&path, json.as_bytes())?,
        None => ctx.print(json.trim_end())?,
    }

    let mismatch = original
        .turns
        .iter()
        .zip(&replayed.turns)
        .position(|(a, b)| !a.same_content(b))
        .or_else(|| (original.turns.len() != replayed.turns.len()).then(|| original.turns.len().min(replayed.turns.len())));
    match mismatch {
        Some(i) => Err(CliError::Validation(format!("replay diverges from the transcript at turn {i}"))),
        None => {
            ctx.note(format!("replayed {} turns without divergence", replayed.turns.len()));
            Ok(())
        }
    }
}

pub fn serve(ctx: &mut Context<'_>, addr: SocketAddr, store: Option<&Path>) -> Result<(), CliError> {
    let exemplars = match &ctx.config.exemplars {
        Some(p) => load_exemplars(p)?,
        None => Vec::new(),
    };
    let chat = ctx.config.chat()?;
    let store = store.map(SessionStore::open).transpose()?;
    let manager = Arc::new(SessionManager::new(ServiceSetup {
        kb: ctx.config.knowledge_base()?,
        scenarios: ctx.config.scenarios()?,
        artifact: ctx.config.artifact()?,
        exemplars,
        patient_provider: chat.clone(),
        coach_provider: chat,
        store,
    })?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("tokio runtime", e))?;
    runtime
        .block_on(coachsim_service::serve(manager, addr))
        .map_err(|e| CliError::io(addr, e))
}

fn open(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))
}

pub fn human_scores(ctx: &mut Context<'_>, ratings: &Path) -> Result<(), CliError> {
    open(ratings)?;
    let summary = aggregate_human_scores(&load_human_ratings(ratings)?)?;
    ctx.print(pretty(&summary).trim_end())
}

pub fn error_tally(ctx: &mut Context<'_>, labels: &Path) -> Result<(), CliError> {
    let tally = tally_error_categories(&read_error_labels(open(labels)?)?)?;
    for r in &tally.rates {
        ctx.print(format!(
            "{:<28}{:>5}/{:<5}{:>7.2}%",
            r.category.as_str(),
            r.count,
            tally.total,
            r.rate_percent
        ))?;
    }
    if let Some(path) = ctx.out.clone() {
        write_file(&path, pretty(&tally).as_bytes())?;
    }
    Ok(())
}
