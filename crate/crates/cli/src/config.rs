use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use coachsim_core::agents::CoachAgent;
use coachsim_core::model::{load_knowledge_base, load_scenarios, KnowledgeBase, Scenario};
use coachsim_core::prompting::{load_exemplars, PromptArtifact, StrategyKind};
use coachsim_core::provider::{build_chat, build_embedder, ChatModel, Embedder, HttpTransport, ProviderMode, ProviderSettings};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Settings shared by every command. Relative paths in the TOML file are
/// resolved against the file's directory; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub knowledge_base: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub artifact: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub provider: ProviderSettings,
}

/// Flag overrides, mirrored from the global command-line options.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub knowledge_base: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub artifact: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub provider: Option<ProviderMode>,
    pub cassette: Option<PathBuf>,
    pub script: Option<PathBuf>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let mut config: CliConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.knowledge_base,
            &mut config.scenarios,
            &mut config.artifact,
            &mut config.exemplars,
            &mut config.out_dir,
            &mut config.provider.cassette,
            &mut config.provider.script,
        ] {
            rebase(base, p);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: Overrides) {
        let pick = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
            if v.is_some() {
                *slot = v;
            }
        };
        pick(&mut self.knowledge_base, o.knowledge_base);
        pick(&mut self.scenarios, o.scenarios);
        pick(&mut self.artifact, o.artifact);
        pick(&mut self.exemplars, o.exemplars);
        pick(&mut self.provider.cassette, o.cassette);
        pick(&mut self.provider.script, o.script);
        if let Some(mode) = o.provider {
            self.provider.mode = mode;
        }
    }

    /// Every referenced input file must exist before a command starts. The
    /// cassette is exempt in record mode, where it may be created.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let mut inputs = vec![
            ("knowledge base", &self.knowledge_base),
            ("scenarios", &self.scenarios),
            ("artifact", &self.artifact),
            ("exemplars", &self.exemplars),
            ("script", &self.provider.script),
        ];
        if self.provider.mode != ProviderMode::Record {
            inputs.push(("cassette", &self.provider.cassette));
        }
        for (what, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::Io(format!("{what} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase, CliError> {
        let path = self
            .knowledge_base
            .as_ref()
            .ok_or_else(|| CliError::Validation("no knowledge base given (--kb)".into()))?;
        Ok(load_knowledge_base(path)?)
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>, CliError> {
        let path = self
            .scenarios
            .as_ref()
            .ok_or_else(|| CliError::Validation("no scenario file given (--scenarios)".into()))?;
        Ok(load_scenarios(path)?)
    }

    pub fn artifact(&self) -> Result<Option<PromptArtifact>, CliError> {
        self.artifact
            .as_ref()
            .map(|p| PromptArtifact::load_valid(p).map_err(CliError::from))
            .transpose()
    }

    /// Coach agent for a strategy, failing when its artifact or exemplars
    /// are missing.
    pub fn coach(&self, strategy: StrategyKind) -> Result<CoachAgent, CliError> {
        let mut coach = CoachAgent::new(strategy);
        if matches!(strategy, StrategyKind::Gcot) {
            if let Some(artifact) = self.artifact()? {
                coach = coach.with_artifact(artifact);
            }
        }
        if matches!(strategy, StrategyKind::VanillaCot) {
            if let Some(path) = &self.exemplars {
                coach = coach.with_exemplars(load_exemplars(path)?);
            }
        }
        coach.check()?;
        Ok(coach)
    }

    pub fn chat(&self) -> Result<Arc<dyn ChatModel>, CliError> {
        Ok(build_chat(&self.provider, transport())?)
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, CliError> {
        Ok(build_embedder(&self.provider, transport())?)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn transport() -> Arc<HttpTransport> {
    Arc::new(HttpTransport::new(Duration::from_secs(120)))
}
