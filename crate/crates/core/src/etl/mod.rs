//! Store-and-forward edge ingestion: bounded immediate retries, a durable
//! local spool, periodic resubmission with an optional connectivity probe,
//! and the flaky-sink experiment harness.

mod experiment;
mod service;
mod sink;
mod spool;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use service::{serve_ingest, CycleReport, EtlConfig, EtlService};
pub use sink::{HarnessSink, OutageSchedule, SinkMode};
pub use spool::SpoolStore;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeliveryState {
    Pending,
    Spooled,
    Delivered,
}

/// One ingested record. `item_id` is assigned once at ingestion and never
/// reused; `delivered` means the sink acknowledged that id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataItem {
    #[serde(rename = "itemId")]
    pub item_id: String,
    #[serde(rename = "createdAt")]
    pub created_at_ms: u128,
    pub payload: Value,
    pub attempts: u32,
    pub state: DeliveryState,
}

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("spool write failed: {0}")]
    SpoolWrite(String),
    #[error("spool load failed: {0}")]
    SpoolLoad(String),
    #[error("bind error: {0}")]
    Bind(String),
    #[error("configuration error: {0}")]
    Config(String),
}
