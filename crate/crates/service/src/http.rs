use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use coachsim_core::prompting::StrategyKind;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ServiceError;
use crate::manager::{ScenarioSummary, SessionManager};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionBody {
    pub scenario_id: String,
    pub strategy: StrategyKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceBody {
    pub text: String,
}

#[derive(Debug, Serialize)]
struct ScenarioList {
    scenarios: Vec<ScenarioSummary>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Closed(_) | ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::InvalidInput(_) | ServiceError::Precondition(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Agent(e) if e.is_provider() => StatusCode::BAD_GATEWAY,
            ServiceError::Agent(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(_) | ServiceError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::InvalidInput(e.body_text()))
}

/// Runs a blocking manager call off the async executor.
async fn blocking<T, F>(manager: Arc<SessionManager>, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&SessionManager) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&manager))
        .await
        .map_err(|e| ServiceError::Storage(format!("worker task failed: {e}")))?
}

async fn list_scenarios(State(m): State<Arc<SessionManager>>) -> Json<serde_json::Value> {
    Json(json!(ScenarioList {
        scenarios: m.list_scenarios()
    }))
}

async fn create_session(
    State(m): State<Arc<SessionManager>>,
    payload: Result<Json<CreateSessionBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(payload)?;
    let summary = blocking(m, move |m| m.create_session(&req.scenario_id, req.strategy)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn post_utterance(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    payload: Result<Json<UtteranceBody>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(payload)?;
    let turn = blocking(m, move |m| m.post_utterance(&id, &req.text)).await?;
    Ok(Json(turn))
}

async fn transcript(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(m, move |m| m.get_transcript(&id)).await?))
}

async fn close(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(blocking(m, move |m| m.close(&id)).await?))
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/close", post(close))
        .with_state(manager)
}

/// Binds and serves until the listener fails.
pub async fn serve(manager: Arc<SessionManager>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "session service listening");
    axum::serve(listener, router(manager)).await
}
