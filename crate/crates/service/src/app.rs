//! Router, handlers and the server loop.

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lmte_core::explain::OracleRegistry;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;

use crate::error::{Error, Result};
use crate::session::{LiveSession, SessionSpec, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// When set, every session is written here as `<id>.json` and restored
    /// on startup.
    pub snapshot_dir: Option<PathBuf>,
    /// Sessions created at startup.
    pub sessions: Vec<SessionSpec>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { bind: "127.0.0.1:8080".into(), snapshot_dir: None, sessions: Vec::new() }
    }
}

/// Shared service state: the session map and the oracle registry.
pub struct AppState {
    registry: OracleRegistry,
    sessions: RwLock<BTreeMap<String, Arc<LiveSession>>>,
    snapshot_dir: Option<PathBuf>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(registry: OracleRegistry, snapshot_dir: Option<PathBuf>) -> Self {
        AppState { registry, sessions: RwLock::new(BTreeMap::new()), snapshot_dir, next_id: AtomicU64::new(1) }
    }

    /// Builds the state for `config`: restores snapshots, then creates the
    /// configured sessions.
    pub fn from_config(config: &ServiceConfig, registry: OracleRegistry) -> Result<Self> {
        let state = AppState::new(registry, config.snapshot_dir.clone());
        state.restore_snapshots()?;
        for spec in &config.sessions {
            state.create(spec.clone())?;
        }
        Ok(state)
    }

    fn restore_snapshots(&self) -> Result<()> {
        let Some(dir) = &self.snapshot_dir else { return Ok(()) };
        if !dir.exists() {
            return Ok(());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let snap: Snapshot = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
            if let Some(n) = snap.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                self.next_id.fetch_max(n + 1, Ordering::SeqCst);
            }
            let live = LiveSession::restore(snap, &self.registry)?;
            self.sessions.write().expect("session map").insert(live.id.clone(), Arc::new(live));
        }
        Ok(())
    }

    pub fn create(&self, spec: SessionSpec) -> Result<Arc<LiveSession>> {
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let live = Arc::new(LiveSession::create(id.clone(), spec, &self.registry)?);
        self.persist(&live)?;
        self.sessions.write().expect("session map").insert(id, live.clone());
        Ok(live)
    }

    pub fn get(&self, id: &str) -> Result<Arc<LiveSession>> {
        self.sessions.read().expect("session map").get(id).cloned().ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().expect("session map").keys().cloned().collect()
    }

    pub fn remove(&self, id: &str) -> Result<()> {
        self.sessions.write().expect("session map").remove(id).ok_or_else(|| Error::SessionNotFound(id.to_string()))?;
        if let Some(dir) = &self.snapshot_dir {
            let p = dir.join(format!("{id}.json"));
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
        Ok(())
    }

    fn persist(&self, live: &LiveSession) -> Result<()> {
        let Some(dir) = &self.snapshot_dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(".{}.json.tmp", live.id));
        std::fs::write(&tmp, serde_json::to_vec(&live.snapshot())?)?;
        std::fs::rename(tmp, dir.join(format!("{}.json", live.id)))?;
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/schema", get(schema))
        .route("/sessions/{id}/tree", get(tree))
        .route("/sessions/{id}/explain", post(explain))
        .route("/sessions/{id}/whatif", post(whatif))
        .fallback(not_found)
        .with_state(state)
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve_on(listener: TcpListener, state: Arc<AppState>, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig, registry: OracleRegistry) -> Result<()> {
    let state = {
        let config = config.clone();
        run_blocking(move || AppState::from_config(&config, registry)).await?
    };
    let listener = TcpListener::bind(&config.bind).await?;
    serve_on(listener, Arc::new(state), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

async fn run_blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| Error::Worker(e.to_string()))?
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| Error::BadBody(e.to_string()))
}

fn flag(query: Option<&str>, name: &str) -> Result<bool> {
    for pair in query.unwrap_or("").split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, "true"));
        if k == name {
            return match v {
                "true" | "1" | "" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(Error::BadBody(format!("query parameter `{name}` must be true or false, got `{v}`"))),
            };
        }
    }
    Ok(false)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn not_found() -> Response {
    let body = json!({ "error": { "code": "not_found", "message": "no such endpoint" } });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response> {
    let spec: SessionSpec = serde_json::from_slice(&body).map_err(|e| Error::BadBody(e.to_string()))?;
    let live = run_blocking({
        let state = state.clone();
        move || state.create(spec)
    })
    .await?;
    let explanation = match live.primary() {
        Some(_) => Some(live.explain(None, false)?),
        None => None,
    };
    Ok((StatusCode::CREATED, Json(json!({ "session_id": live.id, "explanation": explanation }))).into_response())
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "sessions": state.ids() }))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode> {
    state.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn schema(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(state.get(&id)?.schema().clone()).into_response())
}

async fn tree(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    let live = state.get(&id)?;
    let view = run_blocking(move || live.tree()).await?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainBody {
    #[serde(default)]
    point: Option<Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfBody {
    #[serde(default)]
    point: Option<Value>,
    #[serde(default)]
    overrides: Map<String, Value>,
}

async fn explain(State(state): State<Arc<AppState>>, Path(id): Path<String>, RawQuery(query): RawQuery, body: Bytes) -> Result<Response> {
    let fresh = flag(query.as_deref(), "fresh")?;
    let body: ExplainBody = parse_body(&body)?;
    let live = state.get(&id)?;
    let e = run_blocking({
        let state = state.clone();
        move || {
            let e = live.explain(body.point.as_ref(), fresh)?;
            state.persist(&live)?;
            Ok(e)
        }
    })
    .await?;
    Ok(Json(e).into_response())
}

async fn whatif(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let body: WhatIfBody = parse_body(&body)?;
    let live = state.get(&id)?;
    let e = run_blocking(move || live.what_if(body.point.as_ref(), &body.overrides)).await?;
    Ok(Json(e).into_response())
}
