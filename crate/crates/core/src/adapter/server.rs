use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::runtime::{Message, RuntimeError, RuntimeHandle};

use super::AdapterError;

pub struct ActionServerConfig {
    pub port: u16,
    pub handle: RuntimeHandle,
    pub entry_node_id: String,
    pub run_timeout: Duration,
}

impl ActionServerConfig {
    pub fn new(handle: RuntimeHandle, entry_node_id: impl Into<String>) -> Self {
        ActionServerConfig {
            port: 0,
            handle,
            entry_node_id: entry_node_id.into(),
            run_timeout: Duration::from_secs(60),
        }
    }
}

struct ServerState {
    handle: RuntimeHandle,
    entry: String,
    run_timeout: Duration,
    initialized: AtomicBool,
}

/// A running action server; shut down with [`ActionServer::shutdown`].
pub struct ActionServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl ActionServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

/// Expose a flow behind the action protocol: POST /init then POST /run.
/// The flow is baked into the server; /init payloads (including code) are
/// accepted and ignored, but the init-before-run state machine is enforced.
pub async fn serve_action(config: ActionServerConfig) -> Result<ActionServer, AdapterError> {
    let state = Arc::new(ServerState {
        entry: config.entry_node_id.clone(),
        handle: config.handle,
        run_timeout: config.run_timeout,
        initialized: AtomicBool::new(false),
    });
    if state.handle.graph().node(&state.entry).is_none() {
        return Err(AdapterError::Validation(format!(
            "entry node `{}` not in graph",
            state.entry
        )));
    }

    let app = Router::new()
        .route("/init", post(handle_init))
        .route("/run", post(handle_run))
        .with_state(state);

    let listener = tokio::net::TcpListener::bind(("127.0.0.1", config.port))
        .await
        .map_err(|e| AdapterError::Bind(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| AdapterError::Bind(e.to_string()))?;

    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });

    Ok(ActionServer {
        addr,
        shutdown: Some(tx),
        task,
    })
}

async fn handle_init(State(state): State<Arc<ServerState>>, _body: Json<Value>) -> Response {
    if state.initialized.swap(true, Ordering::SeqCst) {
        return (
            StatusCode::FORBIDDEN,
            Json(json!({ "error": "already initialized" })),
        )
            .into_response();
    }
    Json(json!({ "ok": true })).into_response()
}

async fn handle_run(State(state): State<Arc<ServerState>>, body: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Response {
    if !state.initialized.load(Ordering::SeqCst) {
        return (
            StatusCode::FORBIDDEN,
            Json(json!({ "error": "not initialized" })),
        )
            .into_response();
    }
    let Ok(Json(body)) = body else {
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "body is not JSON" })))
            .into_response();
    };
    let Some(value) = body.get("value").cloned() else {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": "missing \"value\" in request body" })),
        )
            .into_response();
    };

    // extra protocol fields (activation_id, namespace, deadline, ...) are
    // preserved on the message for handlers to read
    let mut msg = Message::fresh(value);
    for (k, v) in body.as_object().into_iter().flatten() {
        if k != "value" {
            msg.fields.insert(k.clone(), v.clone());
        }
    }

    match state
        .handle
        .run_message_to_completion(&state.entry, msg, state.run_timeout)
        .await
    {
        Ok(result) => {
            // the protocol requires a JSON object response
            let payload = match result.payload {
                Value::Object(o) => Value::Object(o),
                other => json!({ "value": other }),
            };
            Json(payload).into_response()
        }
        Err(RuntimeError::Timeout) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": "flow execution timed out" })),
        )
            .into_response(),
        Err(e) => (
            StatusCode::BAD_GATEWAY,
            Json(json!({ "error": e.to_string() })),
        )
            .into_response(),
    }
}
