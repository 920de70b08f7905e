//! Harness sink for the flaky-endpoint experiment: dedupes by item id,
//! appends a receipt per accepted call and simulates outages on a fixed
//! up/down alternation.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;

/// Alternation of reachable/unreachable phases, starting up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutageSchedule {
    pub up_ms: u64,
    pub down_ms: u64,
}

impl OutageSchedule {
    pub fn is_up(&self, elapsed_ms: u128) -> bool {
        let period = (self.up_ms + self.down_ms) as u128;
        elapsed_ms % period < self.up_ms as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkMode {
    AlwaysUp,
    AlwaysDown,
    Schedule(OutageSchedule),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Receipt {
    #[serde(rename = "itemId")]
    pub item_id: String,
    pub timestamp: u128,
    pub duplicate: bool,
}

struct SinkState {
    mode: SinkMode,
    started: Instant,
    seen: Mutex<HashSet<String>>,
    receipts: Mutex<Vec<Receipt>>,
    calls_while_down: Mutex<u64>,
}

impl SinkState {
    fn is_up(&self) -> bool {
        match self.mode {
            SinkMode::AlwaysUp => true,
            SinkMode::AlwaysDown => false,
            SinkMode::Schedule(s) => s.is_up(self.started.elapsed().as_millis()),
        }
    }
}

pub struct HarnessSink {
    pub addr: SocketAddr,
    state: Arc<SinkState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl HarnessSink {
    pub async fn start(mode: SinkMode) -> std::io::Result<HarnessSink> {
        let state = Arc::new(SinkState {
            mode,
            started: Instant::now(),
            seen: Mutex::new(HashSet::new()),
            receipts: Mutex::new(Vec::new()),
            calls_while_down: Mutex::new(0),
        });
        let app = Router::new()
            .route("/collect", post(collect))
            .route("/health", get(health))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(HarnessSink {
            addr,
            state,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Distinct item ids acknowledged so far.
    pub fn delivered_ids(&self) -> HashSet<String> {
        self.state.seen.lock().unwrap().clone()
    }

    pub fn receipts(&self) -> Vec<Receipt> {
        self.state.receipts.lock().unwrap().clone()
    }

    pub fn duplicate_count(&self) -> usize {
        self.state
            .receipts
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.duplicate)
            .count()
    }

    pub async fn stop(mut self) -> Vec<Receipt> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
        self.state.receipts.lock().unwrap().clone()
    }
}

async fn collect(State(state): State<Arc<SinkState>>, body: Json<Value>) -> Response {
    if !state.is_up() {
        *state.calls_while_down.lock().unwrap() += 1;
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "sink offline" })),
        )
            .into_response();
    }
    let Some(item_id) = body.get("itemId").and_then(Value::as_str) else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": "missing itemId" })),
        )
            .into_response();
    };
    let duplicate = !state.seen.lock().unwrap().insert(item_id.to_string());
    state.receipts.lock().unwrap().push(Receipt {
        item_id: item_id.to_string(),
        timestamp: state.started.elapsed().as_millis(),
        duplicate,
    });
    Json(json!({ "ok": true, "duplicate": duplicate })).into_response()
}

async fn health(State(state): State<Arc<SinkState>>) -> Response {
    if state.is_up() {
        Json(json!({ "ok": true })).into_response()
    } else {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "sink offline" })),
        )
            .into_response()
    }
}
