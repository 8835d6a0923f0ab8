//! HTTP and WebSocket service hosting live play sessions.
//!
//! Endpoints, all under `/api`:
//! - `GET /api/policies`, `GET /api/layouts`
//! - `POST /api/sessions` with `{layout_id, policy_id, seat, mode, tick_ms}`
//! - `GET /api/sessions/{id}/play` upgraded to a WebSocket carrying the
//!   JSON frames defined in `kitchen_ued::session`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kitchen_ued::agent::{ActionSelection, Agent, NetAgent};
use kitchen_ued::env::{EnvConfig, Kitchen};
use kitchen_ued::layout::Layout;
use kitchen_ued::nn::PolicyNet;
use kitchen_ued::proxy::ProxyAgent;
use kitchen_ued::session::{PlaySession, ServerMessage, SessionMode, SessionSpec, DEFAULT_TICK_MS};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

pub const PROXY_POLICY_ID: &str = "proxy";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyInfo {
    pub id: String,
    pub kind: String,
    pub iteration: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub grid: Vec<Vec<u8>>,
    pub text: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub layout_id: String,
    pub policy_id: String,
    /// Seat taken by the human.
    #[serde(default)]
    pub seat: usize,
    #[serde(default)]
    pub mode: SessionMode,
    pub tick_ms: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

pub struct ServiceConfig {
    pub policies: Vec<(String, usize, PolicyNet)>,
    pub layouts: Vec<Layout>,
    pub env: EnvConfig,
    pub selection: ActionSelection,
    pub log_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

struct Policy {
    info: PolicyInfo,
    agent: Arc<dyn Agent>,
}

type SharedSession = Arc<Mutex<PlaySession>>;

pub struct AppState {
    policies: BTreeMap<String, Policy>,
    layouts: BTreeMap<String, Layout>,
    env: EnvConfig,
    log_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SharedSession>>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

pub fn router(config: ServiceConfig) -> Router {
    let mut policies = BTreeMap::new();
    for (id, iteration, net) in config.policies {
        let agent: Arc<dyn Agent> = Arc::new(NetAgent::new(Arc::new(net), config.selection));
        let info = PolicyInfo {
            id: id.clone(),
            kind: "checkpoint".into(),
            iteration: Some(iteration),
        };
        policies.insert(id, Policy { info, agent });
    }
    policies.insert(
        PROXY_POLICY_ID.to_string(),
        Policy {
            info: PolicyInfo {
                id: PROXY_POLICY_ID.into(),
                kind: "scripted".into(),
                iteration: None,
            },
            agent: Arc::new(ProxyAgent::default()),
        },
    );
    let state = Arc::new(AppState {
        policies,
        layouts: config
            .layouts
            .into_iter()
            .map(|l| (l.id().to_string(), l))
            .collect(),
        env: config.env,
        log_dir: config.log_dir,
        sessions: Mutex::new(HashMap::new()),
    });
    let api = Router::new()
        .route("/api/policies", get(list_policies))
        .route("/api/layouts", get(list_layouts))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/play", get(play))
        .with_state(state);
    match config.static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

async fn list_policies(State(state): State<Arc<AppState>>) -> Json<Vec<PolicyInfo>> {
    Json(state.policies.values().map(|p| p.info.clone()).collect())
}

async fn list_layouts(State(state): State<Arc<AppState>>) -> Json<Vec<LayoutInfo>> {
    Json(
        state
            .layouts
            .values()
            .map(|l| LayoutInfo {
                id: l.id().to_string(),
                width: l.width(),
                height: l.height(),
                grid: l.grid_codes(),
                text: l.to_text(),
            })
            .collect(),
    )
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<Json<SessionCreated>, ApiError> {
    let layout = state.layouts.get(&req.layout_id).ok_or_else(|| {
        ApiError(
            StatusCode::NOT_FOUND,
            format!("unknown layout `{}`", req.layout_id),
        )
    })?;
    let policy = state.policies.get(&req.policy_id).ok_or_else(|| {
        ApiError(
            StatusCode::NOT_FOUND,
            format!("unknown policy `{}`", req.policy_id),
        )
    })?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let spec = SessionSpec {
        session_id: session_id.clone(),
        policy_id: req.policy_id.clone(),
        human_seat: req.seat,
        mode: req.mode,
        tick_ms: req.tick_ms.unwrap_or(DEFAULT_TICK_MS),
        seed: req
            .seed
            .unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0),
    };
    let bad_request = |e: kitchen_ued::Error| ApiError(StatusCode::BAD_REQUEST, e.to_string());
    let kitchen = Kitchen::new(layout.clone(), state.env).map_err(bad_request)?;
    let session = PlaySession::new(
        spec,
        kitchen,
        policy.agent.clone(),
        state.log_dir.as_deref(),
    )
    .map_err(bad_request)?;
    log::info!(
        "session {session_id} on layout {} with {}",
        req.layout_id,
        req.policy_id
    );
    state
        .sessions
        .lock()
        .await
        .insert(session_id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(SessionCreated { session_id }))
}

async fn play(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let session = state
        .sessions
        .lock()
        .await
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))?;
    Ok(ws.on_upgrade(move |socket| drive(socket, session)))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialise");
    socket.send(Message::Text(text.into())).await.is_ok()
}

/// Pumps one WebSocket connection: forwards client messages into the
/// session and, in realtime mode, advances the clock every tick.
async fn drive(mut socket: WebSocket, session: SharedSession) {
    let (mode, tick_ms, first) = {
        let s = session.lock().await;
        (s.spec().mode, s.spec().tick_ms, s.frame())
    };
    if !send(&mut socket, &ServerMessage::State(first)).await {
        return;
    }
    let mut ticker = tokio::time::interval(Duration::from_millis(tick_ms.max(1)));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    ticker.tick().await;
    loop {
        let realtime_live = mode == SessionMode::Realtime && !session.lock().await.is_done();
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let replies = session.lock().await.handle_text(&text);
                for r in &replies {
                    if !send(&mut socket, r).await {
                        return;
                    }
                }
            }
            _ = ticker.tick(), if realtime_live => {
                let frame = session.lock().await.tick();
                let msg = match frame {
                    Ok(f) => ServerMessage::State(f),
                    Err(e) => ServerMessage::Error { message: e.to_string() },
                };
                if !send(&mut socket, &msg).await {
                    return;
                }
            }
        }
    }
}
