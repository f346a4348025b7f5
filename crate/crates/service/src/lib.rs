//! Control and telemetry service for a live link session.
//!
//! | Route | Purpose |
//! |---|---|
//! | `GET /v1/state` | session info, active config and latest snapshot |
//! | `POST /v1/config` | partial config update, applied at the next tick |
//! | `POST /v1/run` | `{"running": bool}` pause or resume |
//! | `GET /v1/frame/{stream}` | reconstructed frame as binary PGM |
//! | `GET /v1/metrics` | WebSocket; one JSON snapshot per text message, newline-terminated |
//!
//! A metrics subscriber that falls [`hub::BACKLOG_LIMIT`] snapshots behind
//! is closed with code [`BACKLOG_CLOSE_CODE`] and reason `"backlog"`.

pub mod engine;
pub mod hub;

use axum::body::Bytes;
use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use mimo_arena_core::linksim::{ConfigDelta, ConfigError};
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;

pub use engine::{Engine, EngineHandle, RunState, StateView, UnknownStream};
pub use hub::{Disconnect, MetricsHub, Subscription, BACKLOG_LIMIT};

pub const PORT_ENV: &str = "MIMO_ARENA_PORT";
pub const DEFAULT_PORT: u16 = 8080;
/// WebSocket close code sent to subscribers dropped for backlog.
pub const BACKLOG_CLOSE_CODE: u16 = 4008;
/// Response header carrying the revision a config update will run under.
pub const REVISION_HEADER: &str = "x-config-revision";
pub const PGM_CONTENT_TYPE: &str = "image/x-portable-graymap";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("{0}")]
    InvalidPort(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn is_addr_in_use(&self) -> bool {
        matches!(self, ServiceError::Bind { source, .. } if source.kind() == std::io::ErrorKind::AddrInUse)
    }
}

/// Port from `MIMO_ARENA_PORT`, or 8080 when unset.
pub fn port_from_env() -> Result<u16, ServiceError> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| ServiceError::InvalidPort(format!("{PORT_ENV}={v:?} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub fn router(engine: EngineHandle) -> Router {
    Router::new()
        .route("/v1/state", get(get_state))
        .route("/v1/config", post(post_config))
        .route("/v1/run", post(post_run))
        .route("/v1/frame/{stream}", get(get_frame))
        .route("/v1/metrics", get(metrics))
        .with_state(engine)
}

/// Bound listener ready to serve.
pub struct Server {
    listener: tokio::net::TcpListener,
}

impl Server {
    pub async fn bind(addr: SocketAddr) -> Result<Server, ServiceError> {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Server { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until `shutdown` resolves.
    pub async fn run(
        self,
        engine: EngineHandle,
        shutdown: impl std::future::Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServiceError> {
        axum::serve(self.listener, router(engine))
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

async fn get_state(State(engine): State<EngineHandle>) -> Json<StateView> {
    Json(engine.state())
}

struct Rejected(ConfigError);

impl IntoResponse for Rejected {
    fn into_response(self) -> Response {
        (StatusCode::UNPROCESSABLE_ENTITY, Json(self.0)).into_response()
    }
}

async fn post_config(State(engine): State<EngineHandle>, body: Bytes) -> Result<Response, Rejected> {
    let delta = ConfigDelta::from_json_slice(&body).map_err(Rejected)?;
    let (config, revision) = engine.apply_delta(&delta).map_err(Rejected)?;
    let mut res = Json(config).into_response();
    res.headers_mut().insert(REVISION_HEADER, HeaderValue::from(revision));
    Ok(res)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RunBody {
    running: bool,
}

async fn post_run(State(engine): State<EngineHandle>, body: Bytes) -> Result<Json<RunBody>, Rejected> {
    let req: RunBody = serde_json::from_slice(&body).map_err(|e| Rejected(ConfigError::new("running", e.to_string())))?;
    engine.set_running(req.running);
    Ok(Json(RunBody {
        running: engine.is_running(),
    }))
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

async fn get_frame(State(engine): State<EngineHandle>, Path(stream): Path<usize>) -> Response {
    match engine.frame_pgm(stream) {
        Ok(pgm) => ([(header::CONTENT_TYPE, PGM_CONTENT_TYPE)], pgm).into_response(),
        Err(e) => (StatusCode::NOT_FOUND, Json(ErrorBody { error: e.to_string() })).into_response(),
    }
}

async fn metrics(State(engine): State<EngineHandle>, ws: WebSocketUpgrade) -> Response {
    let sub = engine.subscribe();
    ws.on_upgrade(move |socket| forward(socket, sub))
}

async fn forward(socket: WebSocket, mut sub: Subscription) {
    let (mut tx, mut rx) = socket.split();
    loop {
        tokio::select! {
            line = sub.recv() => match line {
                Some(line) => {
                    if tx.send(Message::Text(line.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                None => break,
            },
            incoming = rx.next() => match incoming {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
    let frame = match sub.disconnect_reason() {
        Disconnect::Backlog => CloseFrame {
            code: BACKLOG_CLOSE_CODE,
            reason: "backlog".into(),
        },
        Disconnect::Closed => CloseFrame {
            code: 1001,
            reason: "session ended".into(),
        },
    };
    let _ = tx.send(Message::Close(Some(frame))).await;
}
