//! OpenWhisk-flavored REST surface over the simulator. See
//! `docs/simulator-api.md` for the exact request/response shapes.

use std::collections::HashMap;
use std::net::SocketAddr;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde_json::{json, Value};

use super::{ActionDescriptor, ActivationStatus, SimError, Simulator};

pub fn router(sim: Simulator) -> Router {
    Router::new()
        .route(
            "/api/v1/namespaces/_/actions/:name",
            put(register).post(invoke),
        )
        .route("/api/v1/namespaces/_/activations/:id", get(activation))
        .route("/metrics", get(metrics))
        .route("/admin/evict", post(evict))
        .route("/admin/reset-metrics", post(reset_metrics))
        .route("/admin/clear-activations", post(clear_activations))
        .with_state(sim)
}

/// Bind and serve on `addr` (port 0 picks a free port); returns the bound
/// address and the server task.
pub async fn serve(
    sim: Simulator,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = router(sim);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((bound, task))
}

fn error_response(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn sim_error(e: SimError) -> Response {
    let status = match e {
        SimError::ActionNotFound(_) | SimError::ActivationNotFound(_) => StatusCode::NOT_FOUND,
        SimError::CapacityExceeded => StatusCode::TOO_MANY_REQUESTS,
        SimError::Validation(_) | SimError::MissingComponent(_) => StatusCode::BAD_REQUEST,
    };
    error_response(status, e)
}

async fn register(
    State(sim): State<Simulator>,
    Path(name): Path<String>,
    body: Json<Value>,
) -> Response {
    let mut value = body.0;
    if value.get("name").is_none() {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("name".into(), json!(name));
        }
    }
    let desc: ActionDescriptor = match serde_json::from_value(value) {
        Ok(d) => d,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, format!("bad descriptor: {e}")),
    };
    if desc.name != name {
        return error_response(
            StatusCode::BAD_REQUEST,
            "descriptor name does not match URL",
        );
    }
    match sim.register_action(desc.clone()) {
        Ok(()) => Json(json!({ "name": desc.name })).into_response(),
        Err(e) => sim_error(e),
    }
}

async fn invoke(
    State(sim): State<Simulator>,
    Path(name): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    body: Json<Value>,
) -> Response {
    let blocking = query.get("blocking").map(|v| v == "true").unwrap_or(false);
    if blocking {
        match sim.invoke(&name, body.0).await {
            Ok(activation) => {
                let status = match activation.status {
                    ActivationStatus::Success => StatusCode::OK,
                    _ => StatusCode::BAD_GATEWAY,
                };
                (status, Json(activation)).into_response()
            }
            Err(e) => sim_error(e),
        }
    } else {
        match sim.invoke_nonblocking(&name, body.0) {
            Ok(id) => (StatusCode::ACCEPTED, Json(json!({ "activationId": id }))).into_response(),
            Err(e) => sim_error(e),
        }
    }
}

async fn activation(State(sim): State<Simulator>, Path(id): Path<String>) -> Response {
    match sim.activation(&id) {
        Some(a) => Json(a).into_response(),
        None => sim_error(SimError::ActivationNotFound(id)),
    }
}

async fn metrics(State(sim): State<Simulator>) -> Response {
    Json(json!({
        "pool": sim.metrics(),
        "ledger": sim.billing_report(None, None),
        "activations": sim.activation_log().len(),
    }))
    .into_response()
}

async fn evict(State(sim): State<Simulator>, body: Option<Json<Value>>) -> Response {
    let all = body
        .as_ref()
        .and_then(|b| b.get("all"))
        .and_then(Value::as_bool)
        .unwrap_or(true);
    let evicted = if all {
        sim.evict_all_idle()
    } else {
        sim.evict_idle(sim.now_ms())
    };
    Json(json!({ "evicted": evicted })).into_response()
}

async fn reset_metrics(State(sim): State<Simulator>) -> Response {
    sim.reset_high_water();
    Json(json!({ "ok": true })).into_response()
}

async fn clear_activations(State(sim): State<Simulator>) -> Response {
    sim.clear_activations();
    Json(json!({ "ok": true })).into_response()
}
