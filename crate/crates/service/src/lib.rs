//! HTTP and websocket front end for live sessions.
//!
//! Endpoints:
//!
//! | method | path                      | body / result                          |
//! |--------|---------------------------|----------------------------------------|
//! | POST   | `/sessions`               | create, returns the session handle     |
//! | GET    | `/sessions/{id}`          | current handle                         |
//! | POST   | `/sessions/{id}/inference`| `{stage, choice, confidence}`          |
//! | GET    | `/sessions/{id}/records`  | scored trial records as CSV            |
//! | GET    | `/sessions/{id}/log`      | event log as JSON lines                |
//! | GET    | `/sessions/{id}/stream`   | websocket, one connection per session  |

pub mod live;
pub mod wire;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mcs_core::session::SessionError;
use mcs_core::sim::TICK_MS;
use tokio::sync::Mutex;
use tokio::time::MissedTickBehavior;

pub use live::{LiveSession, ServiceError};
pub use wire::{ClientMessage, ServerMessage};

struct Entry {
    live: Mutex<LiveSession>,
    /// Set while a realtime stream is attached.
    streaming: std::sync::atomic::AtomicBool,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<std::sync::RwLock<HashMap<String, Arc<Entry>>>>,
}

impl AppState {
    fn get(&self, id: &str) -> Result<Arc<Entry>, ServiceError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Session(SessionError::ProtocolViolation { .. }) => (StatusCode::CONFLICT, "protocol_violation"),
            ServiceError::Session(SessionError::InvalidConfig(_)) => (StatusCode::BAD_REQUEST, "invalid_config"),
            ServiceError::Session(_) => (StatusCode::CONFLICT, "session_error"),
            ServiceError::InvalidConfidence(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_confidence"),
            ServiceError::StreamBusy => (StatusCode::CONFLICT, "stream_busy"),
        };
        let body = wire::ErrorBody { error: code.to_string(), detail: self.to_string() };
        (status, Json(body)).into_response()
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    r.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn create_session(
    State(state): State<AppState>,
    req: Result<Json<wire::CreateSessionRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let req = body(req)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let live = LiveSession::create(&id, req)?;
    let handle = live.handle();
    let entry = Arc::new(Entry { live: Mutex::new(live), streaming: false.into() });
    state.sessions.write().expect("session map lock").insert(id, entry);
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let entry = state.get(&id)?;
    let handle = entry.live.lock().await.handle();
    Ok(Json(handle))
}

async fn submit_inference(
    State(state): State<AppState>,
    Path(id): Path<String>,
    req: Result<Json<wire::InferenceRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let entry = state.get(&id)?;
    let req = body(req)?;
    let resp = entry.live.lock().await.submit_inference(&req)?;
    Ok(Json(resp))
}

async fn get_records(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let entry = state.get(&id)?;
    let csv = entry.live.lock().await.records_csv();
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv))
}

async fn get_log(State(state): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let entry = state.get(&id)?;
    let jsonl = entry.live.lock().await.log().to_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], jsonl))
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    use std::sync::atomic::Ordering;
    let entry = state.get(&id)?;
    if entry.streaming.swap(true, Ordering::AcqRel) {
        return Err(ServiceError::StreamBusy);
    }
    Ok(ws.on_upgrade(move |socket| async move {
        run_stream(socket, &entry).await;
        entry.streaming.store(false, Ordering::Release);
    }))
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMessage>) -> bool {
    for m in msgs {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

/// Client messages are applied in arrival order; the simulator advances on a
/// fixed 5 ms ticker while a segment is active.
async fn run_stream(mut socket: WebSocket, entry: &Entry) {
    let hello = entry.live.lock().await.phase_message();
    if !send_all(&mut socket, vec![hello]).await {
        return;
    }
    let mut ticker = tokio::time::interval(Duration::from_millis(u64::from(TICK_MS)));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let out = match incoming {
                    Some(Ok(Message::Text(text))) => match wire::parse_client(text.as_str()) {
                        Ok(msg) => entry.live.lock().await.handle_message(msg),
                        Err(code) => vec![ServerMessage::error(code)],
                    },
                    Some(Ok(Message::Binary(_))) => vec![ServerMessage::error("invalid_message")],
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => Vec::new(),
                };
                if !send_all(&mut socket, out).await {
                    return;
                }
            }
            _ = ticker.tick() => {
                let out = {
                    let mut live = entry.live.lock().await;
                    if live.segment_active() { live.tick() } else { Vec::new() }
                };
                if !send_all(&mut socket, out).await {
                    return;
                }
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/inference", post(submit_inference))
        .route("/sessions/{id}/records", get(get_records))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::default())).await
}
