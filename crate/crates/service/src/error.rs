use coachsim_core::agents::AgentError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown {what} {id:?}")]
    NotFound { what: &'static str, id: String },
    #[error("session {0} is closed")]
    Closed(String),
    #[error("session {0} already has a turn in progress")]
    Busy(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("session store: {0}")]
    Storage(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl ServiceError {
    pub(crate) fn unknown_session(id: &str) -> Self {
        ServiceError::NotFound {
            what: "session",
            id: id.to_string(),
        }
    }

    /// Short machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Closed(_) => "session_closed",
            ServiceError::Busy(_) => "session_busy",
            ServiceError::InvalidInput(_) => "invalid_input",
            ServiceError::Precondition(_) => "failed_precondition",
            ServiceError::Agent(e) if e.is_provider() => "provider_failure",
            ServiceError::Agent(_) => "agent_failure",
            ServiceError::Storage(_) => "storage_failure",
            ServiceError::Config(_) => "configuration",
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}
