//! HTTP JSON API:
//!
//! | method | path | caller |
//! |---|---|---|
//! | POST | `/sessions` | admin |
//! | GET | `/sessions/{s}/next?evaluator=<id>` | evaluator |
//! | POST | `/sessions/{s}/votes` | evaluator |
//! | GET | `/sessions/{s}/results` | admin |
//!
//! Admin calls carry `Authorization: Bearer <admin token>`. Evaluators are
//! identified by their roster id.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{
    create_session, Choice, ExcludedVideo, MethodRun, NextPair, ScoringError, Session,
    SessionResults, SessionStore, VoteAck,
};
use crate::report::IncidentReport;

pub struct ScoringService {
    store: SessionStore,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    admin_token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDocument {
    pub run_id: String,
    pub label: String,
    pub reports: Vec<IncidentReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub runs: Vec<RunDocument>,
    pub roster: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub pairs: usize,
    pub excluded: Vec<ExcludedVideo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteRequest {
    pub evaluator: String,
    pub pair_id: String,
    pub choice: Choice,
}

#[derive(Debug, Deserialize)]
struct EvaluatorQuery {
    evaluator: String,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl ScoringService {
    /// Opens the store and reloads every persisted session with its votes.
    pub fn open(store_dir: &Path, admin_token: impl Into<String>) -> Result<Self, ScoringError> {
        let store = SessionStore::open(store_dir)?;
        let mut sessions = HashMap::new();
        for id in store.session_ids()? {
            let plan = store.load_plan(&id)?;
            let (log, votes) = store.open_log(&id)?;
            tracing::info!(session = %id, votes = votes.len(), "session reloaded");
            sessions.insert(id, Arc::new(Mutex::new(Session::with_log(plan, log, votes))));
        }
        Ok(Self {
            store,
            sessions: RwLock::new(sessions),
            admin_token: admin_token.into(),
        })
    }

    /// Creates and persists a session, or returns the existing one with the same definition.
    pub fn create(
        &self,
        runs: [MethodRun; 2],
        roster: Vec<String>,
        seed: u64,
    ) -> Result<CreatedSession, ScoringError> {
        let plan = create_session(runs, roster, seed)?;
        let created = CreatedSession {
            session_id: plan.session_id.clone(),
            pairs: plan.pairs.len(),
            excluded: plan.excluded.clone(),
        };
        let mut sessions = self.sessions.write();
        if sessions.contains_key(&plan.session_id) {
            return Ok(created);
        }
        self.store.save_plan(&plan)?;
        let (log, votes) = self.store.open_log(&plan.session_id)?;
        sessions.insert(
            plan.session_id.clone(),
            Arc::new(Mutex::new(Session::with_log(plan, log, votes))),
        );
        Ok(created)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ScoringError> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ScoringError::UnknownSession(id.to_string()))
    }

    pub fn next_pair(&self, session: &str, evaluator: &str) -> Result<NextPair, ScoringError> {
        self.session(session)?.lock().next_pair(evaluator)
    }

    pub fn submit_vote(
        &self,
        session: &str,
        evaluator: &str,
        pair_id: &str,
        choice: Choice,
    ) -> Result<VoteAck, ScoringError> {
        self.session(session)?
            .lock()
            .submit_vote(evaluator, pair_id, choice, now_ms())
    }

    pub fn results(&self, session: &str) -> Result<SessionResults, ScoringError> {
        Ok(self.session(session)?.lock().results())
    }

    fn is_admin(&self, headers: &HeaderMap) -> bool {
        headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == self.admin_token)
    }
}

struct ApiError(StatusCode, String);

impl From<ScoringError> for ApiError {
    fn from(e: ScoringError) -> Self {
        let status = match &e {
            ScoringError::Session(_) => StatusCode::BAD_REQUEST,
            ScoringError::UnknownEvaluator => StatusCode::UNAUTHORIZED,
            ScoringError::UnknownSession(_) | ScoringError::UnknownPair(_) => StatusCode::NOT_FOUND,
            ScoringError::DuplicateVote(_) => StatusCode::CONFLICT,
            ScoringError::Store { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "vote store failure");
            return ApiError(status, "internal storage error".into());
        }
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn unauthorized() -> ApiError {
    ApiError(StatusCode::UNAUTHORIZED, "admin token required".into())
}

type Shared = Arc<ScoringService>;

async fn post_session(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<CreateSessionRequest>,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    if !svc.is_admin(&headers) {
        return Err(unauthorized());
    }
    let runs: [RunDocument; 2] = req.runs.try_into().map_err(|runs: Vec<RunDocument>| {
        ApiError(
            StatusCode::BAD_REQUEST,
            format!("a session compares exactly 2 runs, got {}", runs.len()),
        )
    })?;
    let [a, b] = runs.map(|r| MethodRun::from_reports(r.run_id, r.label, r.reports));
    let created = svc.create([a, b], req.roster, req.seed)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_next(
    State(svc): State<Shared>,
    UrlPath(session): UrlPath<String>,
    Query(q): Query<EvaluatorQuery>,
) -> Result<Json<NextPair>, ApiError> {
    Ok(Json(svc.next_pair(&session, &q.evaluator)?))
}

async fn post_vote(
    State(svc): State<Shared>,
    UrlPath(session): UrlPath<String>,
    Json(req): Json<VoteRequest>,
) -> Result<Json<VoteAck>, ApiError> {
    let ack = svc.submit_vote(&session, &req.evaluator, &req.pair_id, req.choice)?;
    Ok(Json(ack))
}

async fn get_results(
    State(svc): State<Shared>,
    UrlPath(session): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Json<SessionResults>, ApiError> {
    if !svc.is_admin(&headers) {
        return Err(unauthorized());
    }
    Ok(Json(svc.results(&session)?))
}

/// API routes, plus the UI bundle from `ui_dir` for every other path.
pub fn router(service: Arc<ScoringService>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(post_session))
        .route("/sessions/{s}/next", get(get_next))
        .route("/sessions/{s}/votes", post(post_vote))
        .route("/sessions/{s}/results", get(get_results))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
