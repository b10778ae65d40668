use coachsim_core::agents::AgentError;
use coachsim_core::datagen::DatagenError;
use coachsim_core::eval::EvalError;
use coachsim_core::model::{DatasetError, KnowledgeBaseError};
use coachsim_core::prompting::PromptError;
use coachsim_core::provider::ProviderError;
use coachsim_service::ServiceError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROVIDER: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Provider(_) => EXIT_PROVIDER,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::NotConfigured(_) | ProviderError::InvalidRequest(_) => CliError::Validation(e.to_string()),
            ProviderError::Cassette(_) => CliError::Io(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Provider(p) => p.into(),
            PromptError::Io(m) => CliError::Io(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Provider(p) => p.into(),
            AgentError::Prompt(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Io(m) => CliError::Io(m),
            DatagenError::Agent { source, .. } if source.is_provider() => CliError::Provider(source.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(m) => CliError::Io(m),
            EvalError::Agent(a) => a.into(),
            other if other.is_provider() => CliError::Provider(other.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::Malformed { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<KnowledgeBaseError> for CliError {
    fn from(e: KnowledgeBaseError) -> Self {
        match e {
            KnowledgeBaseError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Agent(a) => a.into(),
            ServiceError::Storage(m) => CliError::Io(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}
