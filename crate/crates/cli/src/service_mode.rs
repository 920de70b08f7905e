//! Service execution mode: expose the flow's http-in routes and answer
//! through its http-response nodes.

use std::sync::Arc;
use std::time::Duration;

use flowfaas_core::runtime::RuntimeHandle;
use serde_json::Value;

pub async fn serve(handle: RuntimeHandle, port: u16) -> Result<(), String> {
    let handle = Arc::new(handle);
    let mut app = axum::Router::new();
    for (method, path, node_id) in handle.http_routes().to_vec() {
        let handle = handle.clone();
        let node_id = node_id.clone();
        let endpoint = move |body: Option<axum::Json<Value>>| {
            let handle = handle.clone();
            let node_id = node_id.clone();
            async move {
                let payload = body.map(|b| b.0).unwrap_or(Value::Null);
                match handle
                    .handle_http_request(&node_id, payload, Duration::from_secs(60))
                    .await
                {
                    Ok(msg) => {
                        let status = msg
                            .fields
                            .get("statusCode")
                            .and_then(Value::as_u64)
                            .and_then(|s| axum::http::StatusCode::from_u16(s as u16).ok())
                            .unwrap_or(axum::http::StatusCode::OK);
                        (status, axum::Json(msg.payload))
                    }
                    Err(e) => (
                        axum::http::StatusCode::BAD_GATEWAY,
                        axum::Json(serde_json::json!({ "error": e.to_string() })),
                    ),
                }
            }
        };
        let filter = match method.as_str() {
            "GET" => axum::routing::MethodFilter::GET,
            "PUT" => axum::routing::MethodFilter::PUT,
            "DELETE" => axum::routing::MethodFilter::DELETE,
            _ => axum::routing::MethodFilter::POST,
        };
        app = app.route(&path, axum::routing::on(filter, endpoint));
    }

    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| format!("bind failed: {e}"))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    println!("service listening on http://{addr}");
    axum::serve(listener, app)
        .await
        .map_err(|e| e.to_string())
}
