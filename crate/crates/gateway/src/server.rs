//! HTTP + WebSocket front end: `GET /health` and one session per `/ws`
//! connection.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use warpbci_core::lexicon::Lexicon;

use crate::fixtures::FixtureRegistry;
use crate::protocol::ServerMsg;
use crate::session::Session;

pub const DEFAULT_TICK_MS: u64 = 100;

/// Read-only state shared by every connection.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub tick_ms: u64,
    /// Clients drive time with `Tick` messages instead of the wall clock.
    pub injected_clock: bool,
    pub dwell_ms: u64,
    pub lexicon: Arc<Lexicon>,
    pub fixtures: Arc<FixtureRegistry>,
}

impl ServerConfig {
    pub fn new(lexicon: Arc<Lexicon>, fixtures: Arc<FixtureRegistry>) -> Self {
        ServerConfig {
            tick_ms: DEFAULT_TICK_MS,
            injected_clock: false,
            dwell_ms: warpbci_core::speller::DEFAULT_DWELL_MS,
            lexicon,
            fixtures,
        }
    }
}

pub fn router(config: ServerConfig) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ws", get(upgrade))
        .with_state(Arc::new(config))
}

async fn health() -> Json<Value> {
    Json(json!({ "ok": true }))
}

async fn upgrade(ws: WebSocketUpgrade, State(config): State<Arc<ServerConfig>>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, config))
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMsg>) -> Result<(), axum::Error> {
    for m in msgs {
        socket.send(Message::Text(m.to_json().into())).await?;
    }
    Ok(())
}

async fn run_session(mut socket: WebSocket, config: Arc<ServerConfig>) {
    let mut session = match Session::new(config.lexicon.clone(), config.fixtures.clone(), config.dwell_ms, config.injected_clock) {
        Ok(s) => s,
        Err(e) => {
            let _ = send_all(&mut socket, vec![ServerMsg::error(format!("{e:#}"))]).await;
            return;
        }
    };
    if send_all(&mut socket, session.greeting()).await.is_err() {
        return;
    }
    let period = Duration::from_millis(config.tick_ms.max(1));
    let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        let out = tokio::select! {
            frame = socket.recv() => match frame {
                Some(Ok(Message::Text(text))) => session.handle_text(text.as_str()),
                Some(Ok(Message::Binary(_))) => vec![ServerMsg::error("binary frames are not supported")],
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
                Some(Ok(Message::Close(_)) | Err(_)) | None => break,
            },
            _ = ticker.tick(), if !config.injected_clock => session.advance(config.tick_ms),
        };
        if send_all(&mut socket, out).await.is_err() {
            break;
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(addr: SocketAddr, config: ServerConfig) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(config);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((local, handle))
}

/// Serves on an already bound listener until Ctrl-C.
pub async fn serve(listener: TcpListener, config: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
