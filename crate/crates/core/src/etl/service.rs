use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::sync::Mutex as AsyncMutex;

use super::spool::SpoolStore;
use super::{DataItem, DeliveryState, EtlError};

#[derive(Debug, Clone)]
pub struct EtlConfig {
    pub max_immediate_retries: u32,
    pub resubmit_interval_ms: u64,
    pub sink_url: String,
    pub probe_before_drain: bool,
    pub spool_path: PathBuf,
}

impl EtlConfig {
    pub fn new(sink_url: impl Into<String>, spool_path: impl Into<PathBuf>) -> Self {
        EtlConfig {
            max_immediate_retries: 5,
            resubmit_interval_ms: 6_000,
            sink_url: sink_url.into(),
            probe_before_drain: true,
            spool_path: spool_path.into(),
        }
    }

    fn check(&self) -> Result<(), EtlError> {
        if self.max_immediate_retries < 1 {
            return Err(EtlError::Config("maxImmediateRetries must be >= 1".into()));
        }
        if self.resubmit_interval_ms == 0 {
            return Err(EtlError::Config("resubmitIntervalMs must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of one resubmission pass over the spool.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CycleReport {
    pub sent: usize,
    pub failed: usize,
    pub remaining: usize,
}

/// The store-and-forward ingestion service. Cheap to clone; spool mutations
/// are serialized internally and resubmit cycles never overlap.
#[derive(Clone)]
pub struct EtlService {
    config: Arc<EtlConfig>,
    spool: Arc<SpoolStore>,
    http: reqwest::Client,
    cycle_lock: Arc<AsyncMutex<()>>,
}

impl EtlService {
    pub fn new(config: EtlConfig) -> Result<Self, EtlError> {
        config.check()?;
        let spool = Arc::new(SpoolStore::open(&config.spool_path)?);
        Ok(EtlService {
            config: Arc::new(config),
            spool,
            http: reqwest::Client::builder()
                .timeout(Duration::from_millis(2_000))
                .build()
                .expect("client construction"),
            cycle_lock: Arc::new(AsyncMutex::new(())),
        })
    }

    pub fn spool(&self) -> &SpoolStore {
        &self.spool
    }

    pub fn config(&self) -> &EtlConfig {
        &self.config
    }

    async fn send_item(&self, item_id: &str, payload: &Value) -> bool {
        let result = self
            .http
            .post(format!("{}/collect", self.config.sink_url.trim_end_matches('/')))
            .json(&json!({ "itemId": item_id, "payload": payload }))
            .send()
            .await;
        matches!(result, Ok(resp) if resp.status().is_success())
    }

    /// Ingest one payload: try the sink up to `max_immediate_retries`
    /// consecutive times, then durably spool. Never silently drops: a spool
    /// write failure is surfaced as an error.
    pub async fn ingest(&self, payload: Value) -> Result<DataItem, EtlError> {
        let mut item = DataItem {
            item_id: uuid::Uuid::new_v4().to_string(),
            created_at_ms: epoch_ms(),
            payload,
            attempts: 0,
            state: DeliveryState::Pending,
        };
        for _ in 0..self.config.max_immediate_retries {
            item.attempts += 1;
            if self.send_item(&item.item_id, &item.payload).await {
                item.state = DeliveryState::Delivered;
                return Ok(item);
            }
        }
        item.state = DeliveryState::Spooled;
        self.spool.put(&item)?;
        Ok(item)
    }

    /// One resubmission pass: optionally probe first and skip the cycle on
    /// failure, otherwise drain in insertion order, deleting each item only
    /// after sink acknowledgment and stopping at the first failure.
    pub async fn resubmit_cycle(&self) -> CycleReport {
        let _guard = self.cycle_lock.lock().await;
        let mut report = CycleReport {
            remaining: self.spool.len(),
            ..CycleReport::default()
        };

        if self.config.probe_before_drain {
            let probe = self
                .http
                .get(format!("{}/health", self.config.sink_url.trim_end_matches('/')))
                .send()
                .await;
            if !matches!(probe, Ok(resp) if resp.status().is_success()) {
                return report;
            }
        }

        for item in self.spool.snapshot() {
            if self.send_item(&item.item_id, &item.payload).await {
                let _ = self.spool.delete(&item.item_id);
                report.sent += 1;
                report.remaining = self.spool.len();
            } else {
                report.failed += 1;
                break;
            }
        }
        report.remaining = self.spool.len();
        report
    }

    /// Run resubmit cycles forever at the configured interval.
    pub fn spawn_scheduler(&self) -> tokio::task::JoinHandle<()> {
        let service = self.clone();
        tokio::spawn(async move {
            let mut tick =
                tokio::time::interval(Duration::from_millis(service.config.resubmit_interval_ms));
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            tick.tick().await;
            loop {
                tick.tick().await;
                service.resubmit_cycle().await;
            }
        })
    }
}

fn epoch_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_millis()
}

/// A running ingest endpoint (POST /ingest) with its resubmit scheduler.
pub struct IngestServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
    scheduler: tokio::task::JoinHandle<()>,
}

impl IngestServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) {
        self.scheduler.abort();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }
}

/// Serve the HTTP ingest surface for an [`EtlService`].
pub async fn serve_ingest(service: EtlService, port: u16) -> Result<IngestServer, EtlError> {
    let scheduler = service.spawn_scheduler();
    let app = Router::new()
        .route("/ingest", post(ingest_route))
        .route("/status", get(status_route))
        .with_state(service);
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| EtlError::Bind(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| EtlError::Bind(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(IngestServer {
        addr,
        shutdown: Some(tx),
        task,
        scheduler,
    })
}

async fn ingest_route(State(service): State<EtlService>, body: Json<Value>) -> Response {
    match service.ingest(body.0).await {
        Ok(item) => Json(json!({
            "itemId": item.item_id,
            "state": item.state,
            "attempts": item.attempts,
        }))
        .into_response(),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": e.to_string() })),
        )
            .into_response(),
    }
}

async fn status_route(State(service): State<EtlService>) -> Response {
    Json(json!({ "spoolSize": service.spool().len() })).into_response()
}
