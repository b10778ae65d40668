//! `coachsim` command-line entry points.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 provider failure,
//! 3 I/O failure. Data goes to stdout, diagnostics to stderr.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coachsim_core::eval::Extractor;
use coachsim_core::prompting::StrategyKind;
use coachsim_core::provider::ProviderMode;

pub use commands::Context;
pub use config::{CliConfig, Overrides};
pub use error::{CliError, EXIT_IO, EXIT_OK, EXIT_PROVIDER, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "coachsim", version, about = "Medical communication coaching simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with default paths and provider settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Knowledge base (JSONL, one disease per line).
    #[arg(long, global = true)]
    pub kb: Option<PathBuf>,
    /// Scenario file (JSONL).
    #[arg(long, global = true)]
    pub scenarios: Option<PathBuf>,
    /// Validated GCoT prompt artifact (JSON).
    #[arg(long, global = true)]
    pub artifact: Option<PathBuf>,
    /// Exemplars for the vanilla chain-of-thought coach (JSONL).
    #[arg(long, global = true)]
    pub exemplars: Option<PathBuf>,
    /// remote, scripted, replay or record.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub provider: Option<ProviderMode>,
    #[arg(long, global = true)]
    pub cassette: Option<PathBuf>,
    /// Script file for the scripted provider (JSONL).
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Seed for every random choice; overrides the generation config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or output directory for datagen.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for append-only session logs; in-memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Build prompt artifacts.
    Gcot {
        #[command(subcommand)]
        command: GcotCommand,
    },
    /// Generate an annotated synthetic dataset.
    Datagen {
        /// Generation settings (TOML).
        generation: PathBuf,
        /// Seed queries, one per line.
        seeds: PathBuf,
        #[arg(long, default_value = "instruction", value_parser = parse_strategy)]
        strategy: StrategyKind,
        /// Score rater agreement with the chat provider instead of token F1.
        #[arg(long)]
        judge_agreement: bool,
    },
    /// Score a coaching strategy on a dataset.
    Eval {
        dataset: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: StrategyKind,
        #[arg(long, default_value = "rule_based", value_parser = parse_extractor)]
        extractor: Extractor,
        /// Also score doctor turns without annotations.
        #[arg(long)]
        include_nonlingual: bool,
    },
    /// Print dataset statistics.
    Stats { dataset: PathBuf },
    /// Re-run a session transcript and check it reproduces.
    Replay {
        transcript: PathBuf,
        #[arg(long, default_value = "instruction", value_parser = parse_strategy)]
        strategy: StrategyKind,
    },
    /// Aggregate human feedback ratings (CSV).
    HumanScores { ratings: PathBuf },
    /// Tally feedback error categories (CSV).
    ErrorTally { labels: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum GcotCommand {
    /// Infer variables from samples and generate a validated artifact.
    Build {
        /// Input/output samples (JSONL).
        samples: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<ProviderMode, String> {
    match s {
        "remote" => Ok(ProviderMode::Remote),
        "scripted" => Ok(ProviderMode::Scripted),
        "replay" => Ok(ProviderMode::Replay),
        "record" => Ok(ProviderMode::Record),
        other => Err(format!("unknown provider {other:?} (expected remote, scripted, replay or record)")),
    }
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn parse_extractor(s: &str) -> Result<Extractor, String> {
    s.parse()
}

fn resolve(global: &GlobalArgs) -> Result<CliConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    config.apply(Overrides {
        knowledge_base: global.kb.clone(),
        scenarios: global.scenarios.clone(),
        artifact: global.artifact.clone(),
        exemplars: global.exemplars.clone(),
        provider: global.provider,
        cassette: global.cassette.clone(),
        script: global.script.clone(),
    });
    config.check_inputs()?;
    Ok(config)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let config = resolve(&cli.global)?;
    let mut ctx = Context {
        config,
        out: cli.global.out,
        seed: cli.global.seed,
        stdout,
        stderr,
    };
    match cli.command {
        Command::Serve { addr, store } => commands::serve(&mut ctx, addr, store.as_deref()),
        Command::Gcot {
            command: GcotCommand::Build { samples },
        } => commands::gcot_build(&mut ctx, &samples),
        Command::Datagen {
            generation,
            seeds,
            strategy,
            judge_agreement,
        } => commands::datagen(&mut ctx, &generation, &seeds, strategy, judge_agreement),
        Command::Eval {
            dataset,
            strategy,
            extractor,
            include_nonlingual,
        } => commands::eval(&mut ctx, &dataset, strategy, extractor, include_nonlingual),
        Command::Stats { dataset } => commands::stats(&mut ctx, &dataset),
        Command::Replay { transcript, strategy } => commands::replay(&mut ctx, &transcript, strategy),
        Command::HumanScores { ratings } => commands::human_scores(&mut ctx, &ratings),
        Command::ErrorTally { labels } => commands::error_tally(&mut ctx, &labels),
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return EXIT_VALIDATION;
            }
            let _ = write!(stdout, "{text}");
            return EXIT_OK;
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            tracing::debug!(error = ?e, "command failed");
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
