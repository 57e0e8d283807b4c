//! HTTP routes and the per-connection render loop.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use voxfilter_core::histogram::build_histogram;
use voxfilter_core::render::{render_frame, Frame};
use voxfilter_core::{HistogramModel, Volume};

use crate::protocol::{encode_frame, Command, FrameHeader, Reply, VERSION};
use crate::session::{apply_command, SessionState};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] voxfilter_core::Error),
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Shared between all sessions. The volume and histogram never change.
pub struct AppState {
    pub volume: Arc<Volume>,
    pub histogram: Arc<HistogramModel>,
    pub volume_hash: String,
    /// Most recently changed session state; new sessions start from it.
    latest: Mutex<SessionState>,
}

impl AppState {
    pub fn new(volume: Volume) -> Result<Arc<Self>, ServiceError> {
        let histogram = build_histogram(&volume)?;
        let latest = Mutex::new(SessionState::initial(&volume));
        // warm the brick map outside any request
        volume.bricks();
        let volume_hash = latest.lock().expect("fresh lock").volume.hash.clone();
        Ok(Arc::new(Self {
            volume_hash,
            volume: Arc::new(volume),
            histogram: Arc::new(histogram),
            latest,
        }))
    }

    pub fn latest_state(&self) -> SessionState {
        self.latest.lock().expect("state lock").clone()
    }

    fn publish(&self, state: &SessionState) {
        *self.latest.lock().expect("state lock") = state.clone();
    }
}

pub fn router(app: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/health", get(health))
        .route("/state", get(state))
        .route("/stream", get(stream));
    let router = match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    };
    router.with_state(app)
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves until `shutdown` resolves, then drains open connections.
pub async fn serve(
    listener: TcpListener,
    app: Arc<AppState>,
    static_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    axum::serve(listener, router(app, static_dir))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}

async fn health(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "volume_hash": app.volume_hash,
        "dims": app.volume.dims(),
    }))
}

async fn state(State(app): State<Arc<AppState>>) -> Json<SessionState> {
    Json(app.latest_state())
}

async fn stream(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, app))
}

fn to_text(reply: &Reply) -> Message {
    Message::Text(serde_json::to_string(reply).expect("reply serializes").into())
}

/// One connection: commands mutate the session state; whenever the state
/// changed and no render is running, the latest state is rendered. Commands
/// arriving during a render only mark the state dirty, so a burst collapses
/// into a single follow-up frame.
async fn run_session(socket: WebSocket, app: Arc<AppState>) {
    let (mut tx, mut rx) = socket.split();
    let mut state = app.latest_state();
    state.sequence = 0;
    let mut dirty = false;
    let mut in_flight: Option<JoinHandle<voxfilter_core::Result<Frame>>> = None;

    loop {
        if dirty && in_flight.is_none() {
            dirty = false;
            let (vol, hist, s) = (app.volume.clone(), app.histogram.clone(), state.clone());
            in_flight = Some(tokio::task::spawn_blocking(move || {
                render_frame(&vol, &s.camera, &s.params, &s.filter, Some(&hist))
            }));
        }

        tokio::select! {
            msg = rx.next() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let reply = Reply::Error {
                            message: "commands must be JSON text messages".into(),
                            sequence: state.sequence,
                        };
                        if tx.send(to_text(&reply)).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<Command>(&text) {
                    Err(e) => Err(format!("malformed command: {e}")),
                    Ok(cmd) => apply_command(&mut state, &cmd).map(|()| cmd),
                };
                let reply = match reply {
                    Ok(cmd) => {
                        dirty = true;
                        app.publish(&state);
                        Reply::Ack {
                            command: cmd.verb().into(),
                            threshold: state.threshold(&app.histogram),
                            state: state.clone(),
                        }
                    }
                    Err(message) => Reply::Error { message, sequence: state.sequence },
                };
                if tx.send(to_text(&reply)).await.is_err() {
                    break;
                }
            }
            done = async { in_flight.as_mut().expect("guarded").await }, if in_flight.is_some() => {
                in_flight = None;
                let frame = match done {
                    Ok(Ok(frame)) => frame,
                    Ok(Err(e)) => {
                        let reply = Reply::Error { message: e.to_string(), sequence: state.sequence };
                        if tx.send(to_text(&reply)).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(_) => break,
                };
                state.sequence += 1;
                let header = FrameHeader {
                    version: VERSION,
                    sequence: state.sequence,
                    width: frame.width as u16,
                    height: frame.height as u16,
                    render_ms: frame.timing.total_ms as f32,
                    config_digest: frame.snapshot.digest(),
                };
                let info = Reply::FrameInfo {
                    sequence: state.sequence,
                    config_digest: frame.snapshot.digest_hex(),
                    snapshot: frame.snapshot.clone(),
                    stats: frame.stats,
                    render_ms: frame.timing.total_ms,
                };
                let payload = encode_frame(&header, &frame.pixels);
                if tx.send(to_text(&info)).await.is_err()
                    || tx.send(Message::Binary(payload.into())).await.is_err()
                {
                    break;
                }
            }
        }
    }
    if let Some(handle) = in_flight {
        handle.abort();
    }
}
