//! HTTP routes. Each session sits behind an async mutex; writers take it
//! with `try_lock`, so a write that overlaps another one is rejected with
//! 409 instead of queueing. Reads are served from the last published
//! snapshot and never wait on a writer.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::error::ApiError;
use crate::session::{CreateSession, Environment, QueryOutcome, Session, SessionSnapshot, Status};
use crate::store::{self, Event, EventLog};

/// Request bodies may carry a CSV upload of up to this many bytes.
pub const MAX_BODY_BYTES: usize = 256 << 20;

pub struct Slot {
    pub session: Session,
    pub log: Option<EventLog>,
}

pub struct SessionHandle {
    slot: Arc<Mutex<Slot>>,
    published: RwLock<Arc<SessionSnapshot>>,
}

impl SessionHandle {
    fn new(slot: Slot) -> Self {
        let snap = Arc::new(slot.session.snapshot());
        SessionHandle {
            slot: Arc::new(Mutex::new(slot)),
            published: RwLock::new(snap),
        }
    }

    pub fn snapshot(&self) -> Arc<SessionSnapshot> {
        self.published.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, slot: &Slot) {
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(slot.session.snapshot());
    }

    fn try_write(&self) -> Result<OwnedMutexGuard<Slot>, ApiError> {
        self.slot
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::conflict("busy", "another request is updating this session"))
    }
}

pub struct AppState {
    env: Environment,
    data_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    /// Replays any sessions logged in `data_dir`.
    pub fn new(env: Environment, data_dir: Option<PathBuf>) -> Result<Self, ApiError> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &data_dir {
            for (session, log) in store::load_dir(dir, &env)? {
                info!("restored session {} ({} labels)", session.id(), session.n_labeled());
                let id = session.id().to_string();
                sessions.insert(id, Arc::new(SessionHandle::new(Slot { session, log: Some(log) })));
            }
        }
        Ok(AppState {
            env,
            data_dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session '{id}'")))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
        ids.sort();
        ids
    }
}

pub type SharedState = Arc<AppState>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/query", post(next_query))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn snapshot_response(status: StatusCode, snap: &SessionSnapshot) -> Response {
    match serde_json::to_vec(snap) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

async fn create_session(State(st): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSession = parse_json(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let env = st.env.clone();
    let dir = st.data_dir.clone();
    let handle = blocking(move || {
        let session = Session::create(id.clone(), request.clone(), &env)?;
        let log = match dir {
            Some(dir) => {
                let mut log = EventLog::open(EventLog::path_for(&dir, &id))?;
                log.append(&Event::Create {
                    id,
                    created_ms: session.created_ms(),
                    request,
                })?;
                Some(log)
            }
            None => None,
        };
        Ok(SessionHandle::new(Slot { session, log }))
    })
    .await?;
    let snap = handle.snapshot();
    info!("created session {} ({} nodes)", snap.id, snap.dataset.n_nodes);
    st.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(snap.id.clone(), Arc::new(handle));
    Ok(snapshot_response(StatusCode::CREATED, &snap))
}

#[derive(Serialize)]
struct SessionListing {
    id: String,
    status: Status,
    n_nodes: usize,
    n_labeled: usize,
}

async fn list_sessions(State(st): State<SharedState>) -> Json<Vec<SessionListing>> {
    let listing = st
        .session_ids()
        .into_iter()
        .filter_map(|id| st.session(&id).ok())
        .map(|h| {
            let s = h.snapshot();
            SessionListing {
                id: s.id.clone(),
                status: s.status,
                n_nodes: s.dataset.n_nodes,
                n_labeled: s.n_labeled,
            }
        })
        .collect();
    Json(listing)
}

async fn get_session(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(snapshot_response(StatusCode::OK, &st.session(&id)?.snapshot()))
}

async fn next_query(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Json<QueryOutcome>, ApiError> {
    let handle = st.session(&id)?;
    let mut slot = handle.try_write()?;
    let out = blocking(move || {
        let out = slot.session.next_query()?;
        if let QueryOutcome::Pending(q) = &out {
            if let Some(log) = slot.log.as_mut() {
                log.append(&Event::Query {
                    step: q.step,
                    index: q.index,
                })?;
            }
        }
        handle.publish(&slot);
        Ok(out)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRequest {
    index: usize,
    label: i64,
}

async fn submit_label(
    State(st): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<crate::session::LabelOutcome>, ApiError> {
    let req: LabelRequest = parse_json(&body)?;
    let handle = st.session(&id)?;
    let mut slot = handle.try_write()?;
    let out = blocking(move || {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let out = slot.session.submit_label(req.index, req.label, now)?;
        let Slot { session, log } = &mut *slot;
        if let Some(log) = log.as_mut() {
            log.record_label(session, req.index, req.label, out.step)?;
        }
        handle.publish(&slot);
        Ok(out)
    })
    .await?;
    Ok(Json(out))
}

async fn export(State(st): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = st.session(&id)?.snapshot();
    let csv = snap.export_csv()?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"session-{id}.csv\"")),
        ],
        csv,
    )
        .into_response())
}
