//! Live coaching sessions over HTTP.
//!
//! A learner talks to the patient agent while the coach agent reviews each
//! learner utterance. Every exchange appends learner, patient and coach turns
//! together; the patient only ever sees the coach-free history.

mod error;
mod http;
mod manager;
mod store;

pub use error::ServiceError;
pub use http::{router, serve, CreateSessionBody, UtteranceBody};
pub use manager::{
    Clock, IdSource, RandomIds, ScenarioSummary, SequentialIds, ServiceSetup, Session, SessionManager, SessionStatus,
    SessionSummary, StepClock, SystemClock, TurnResult,
};
pub use store::{IndexEntry, LogEvent, SessionStore};
