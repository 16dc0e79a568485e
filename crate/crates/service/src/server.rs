//! HTTP + WebSocket front end for interactive play.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use builder_core::agent::Predictor;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::Session;

pub type SharedModel = Arc<dyn Predictor + Send + Sync>;

#[derive(Clone)]
pub struct ServerConfig {
    /// Directory served at `/`; a built-in page is used when absent.
    pub assets: Option<PathBuf>,
    pub max_steps: usize,
}

#[derive(Clone)]
struct AppState {
    model: SharedModel,
    max_steps: usize,
    next_id: Arc<AtomicU64>,
}

const FALLBACK_PAGE: &str = r#"<!doctype html>
<html><head><meta charset="utf-8"><title>builder</title></head>
<body>
<p>Builder play server. Connect a console to <code>/ws</code>.</p>
<input id="say" size="60" placeholder="instruction"><button id="go">send</button>
<button id="reset">reset</button>
<pre id="log"></pre>
<script>
const ws = new WebSocket((location.protocol === "https:" ? "wss://" : "ws://") + location.host + "/ws");
const log = document.getElementById("log");
ws.onmessage = (e) => { log.textContent += e.data + "\n"; };
document.getElementById("go").onclick = () => {
  const el = document.getElementById("say");
  ws.send(JSON.stringify({type: "utterance", text: el.value}));
  el.value = "";
};
document.getElementById("reset").onclick = () => ws.send(JSON.stringify({type: "reset"}));
</script>
</body></html>
"#;

pub fn router(model: SharedModel, cfg: ServerConfig) -> Router {
    let state = AppState {
        model,
        max_steps: cfg.max_steps,
        next_id: Arc::new(AtomicU64::new(1)),
    };
    let app = Router::new().route("/healthz", get(healthz)).route("/ws", get(ws_upgrade));
    let app = match cfg.assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => app.route("/", get(|| async { Html(FALLBACK_PAGE) })),
    };
    app.with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, model: SharedModel, cfg: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(model, cfg)).await
}

pub async fn bind(port: u16) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await
}

async fn healthz() -> &'static str {
    "ok"
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

/// One connection owns one session; messages are handled strictly in arrival order.
async fn connection(mut socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    tracing::info!(session = id, "connected");
    let mut session = Some(Session::new(id, state.max_steps));
    while let Some(frame) = socket.recv().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(b)) => match String::from_utf8(b) {
                Ok(t) => t,
                Err(_) => {
                    if send(&mut socket, &ServerMessage::error("binary frames must be UTF-8 JSON")).await.is_err() {
                        break;
                    }
                    continue;
                }
            },
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let msg = match ClientMessage::parse(&text) {
            Ok(m) => m,
            Err(e) => {
                if send(&mut socket, &ServerMessage::error(e.to_string())).await.is_err() {
                    break;
                }
                continue;
            }
        };

        // Inference is CPU-bound: run it off the async workers and stream
        // each reply back as it is produced.
        let (tx, mut rx) = mpsc::unbounded_channel();
        let model = state.model.clone();
        let mut s = session.take().expect("session is returned after each message");
        let job = tokio::task::spawn_blocking(move || {
            s.handle(model.as_ref(), msg, &mut |m| {
                let _ = tx.send(m);
            });
            s
        });
        let mut open = true;
        while let Some(m) = rx.recv().await {
            if open && send(&mut socket, &m).await.is_err() {
                open = false;
            }
        }
        match job.await {
            Ok(s) => session = Some(s),
            Err(e) => {
                tracing::error!(session = id, error = %e, "turn panicked");
                let _ = send(&mut socket, &ServerMessage::error("internal error")).await;
                break;
            }
        }
        if !open {
            break;
        }
    }
    tracing::info!(session = id, "disconnected");
}

async fn send(socket: &mut WebSocket, m: &ServerMessage) -> Result<(), axum::Error> {
    socket.send(Message::Text(m.to_json())).await
}
