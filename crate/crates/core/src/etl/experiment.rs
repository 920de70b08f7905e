use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;

use super::service::{EtlConfig, EtlService};
use super::sink::{HarnessSink, SinkMode};
use super::EtlError;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: SinkMode,
    pub rate_hz: f64,
    pub duration_ms: u64,
    pub max_immediate_retries: u32,
    pub resubmit_interval_ms: u64,
    pub probe_before_drain: bool,
    pub spool_path: std::path::PathBuf,
    /// Grace period after generation for final drain cycles; 0 skips the
    /// drain (used with an always-down sink).
    pub drain_grace_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub injected: usize,
    #[serde(rename = "injectedIds")]
    pub injected_ids: Vec<String>,
    pub delivered: usize,
    #[serde(rename = "deliveredIds")]
    pub delivered_ids: Vec<String>,
    pub duplicates: usize,
    #[serde(rename = "lostIds")]
    pub lost_ids: Vec<String>,
    #[serde(rename = "maxSpoolSize")]
    pub max_spool_size: usize,
    #[serde(rename = "finalSpoolSize")]
    pub final_spool_size: usize,
    /// (elapsed ms, spool size) samples, ~4 Hz.
    #[serde(rename = "spoolSeries")]
    pub spool_series: Vec<(u64, usize)>,
}

impl ExperimentReport {
    /// Count rise-and-drain cycles in the spool-size series: transitions
    /// from a growing spool back to a (local) drained minimum.
    pub fn drain_cycles(&self) -> usize {
        let mut cycles = 0;
        let mut rising = false;
        let mut prev = 0usize;
        for &(_, size) in &self.spool_series {
            if size > prev {
                rising = true;
            } else if size < prev && rising {
                cycles += 1;
                rising = false;
            }
            prev = size;
        }
        cycles
    }
}

/// Drive a synthetic generator at `rate_hz` against a harness sink obeying
/// the outage mode, recording per-item edge and sink logs and the
/// spool-size time series.
pub async fn run_experiment(config: ExperimentConfig) -> Result<ExperimentReport, EtlError> {
    let sink = HarnessSink::start(config.mode)
        .await
        .map_err(|e| EtlError::Bind(e.to_string()))?;

    let mut etl_config = EtlConfig::new(sink.base_url(), &config.spool_path);
    etl_config.max_immediate_retries = config.max_immediate_retries;
    etl_config.resubmit_interval_ms = config.resubmit_interval_ms;
    etl_config.probe_before_drain = config.probe_before_drain;
    let service = EtlService::new(etl_config)?;
    let scheduler = service.spawn_scheduler();

    // spool sampler
    let series: std::sync::Arc<std::sync::Mutex<Vec<(u64, usize)>>> = Default::default();
    let sampler = {
        let service = service.clone();
        let series = series.clone();
        let started = Instant::now();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_millis(250));
            loop {
                tick.tick().await;
                series
                    .lock()
                    .unwrap()
                    .push((started.elapsed().as_millis() as u64, service.spool().len()));
            }
        })
    };

    // generator: rate_hz ingests per second for duration_ms. Ingests run
    // detached so a slow sink path does not stall the injection rate.
    let interval_ms = (1000.0 / config.rate_hz).max(1.0) as u64;
    let total = ((config.duration_ms as f64) * config.rate_hz / 1000.0).round() as usize;
    let mut tick = tokio::time::interval(Duration::from_millis(interval_ms));
    let mut handles = Vec::with_capacity(total);
    for seq in 0..total {
        tick.tick().await;
        let service = service.clone();
        handles.push(tokio::spawn(async move {
            service.ingest(json!({ "seq": seq })).await
        }));
    }

    // wait for in-flight ingests (retry paths can lag the generator)
    let mut injected_ids = Vec::with_capacity(total);
    for handle in handles {
        if let Ok(Ok(item)) = handle.await {
            injected_ids.push(item.item_id);
        }
    }

    if config.drain_grace_ms > 0 {
        let deadline = Instant::now() + Duration::from_millis(config.drain_grace_ms);
        while !service.spool().is_empty() && Instant::now() < deadline {
            service.resubmit_cycle().await;
            tokio::time::sleep(Duration::from_millis(
                config.resubmit_interval_ms.min(1_000),
            ))
            .await;
        }
    }

    scheduler.abort();
    sampler.abort();
    let final_spool_size = service.spool().len();
    let duplicates = sink.duplicate_count();
    let delivered_set: HashSet<String> = sink.delivered_ids();
    sink.stop().await;

    let injected_set: HashSet<&String> = injected_ids.iter().collect();
    let lost_ids: Vec<String> = injected_set
        .iter()
        .filter(|id| !delivered_set.contains(id.as_str()))
        .map(|id| (*id).clone())
        .collect();

    let series = series.lock().unwrap().clone();
    let max_spool_size = series.iter().map(|&(_, s)| s).max().unwrap_or(0);
    let mut delivered_ids: Vec<String> = delivered_set.into_iter().collect();
    delivered_ids.sort();

    Ok(ExperimentReport {
        injected: injected_ids.len(),
        injected_ids,
        delivered: delivered_ids.len(),
        delivered_ids,
        duplicates,
        lost_ids,
        max_spool_size,
        final_spool_size,
        spool_series: series,
    })
}
