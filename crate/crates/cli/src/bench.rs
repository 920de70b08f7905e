//! Benchmark subcommands: cold/hot invocation latency and the
//! store-and-forward no-loss experiment.

use std::path::PathBuf;
use std::time::Instant;

use flowfaas_core::etl::{run_experiment, ExperimentConfig, OutageSchedule, SinkMode};
use flowfaas_core::sim::{ActionDescriptor, PoolConfig, Simulator};
use serde::Serialize;
use serde_json::json;

use crate::EXIT_DOMAIN;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRun {
    #[serde(rename = "runIndex")]
    pub run_index: usize,
    #[serde(rename = "coldStart")]
    pub cold_start: bool,
    #[serde(rename = "latencyMs")]
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchSummary {
    #[serde(rename = "coldMeanMs")]
    pub cold_mean_ms: f64,
    #[serde(rename = "coldStdMs")]
    pub cold_std_ms: f64,
    #[serde(rename = "hotMeanMs")]
    pub hot_mean_ms: f64,
    #[serde(rename = "hotStdMs")]
    pub hot_std_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub runs: Vec<BenchRun>,
    pub summary: BenchSummary,
}

pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / samples.len() as f64;
    (mean, var.sqrt())
}

pub fn summarize(runs: &[BenchRun]) -> BenchSummary {
    let cold: Vec<f64> = runs.iter().filter(|r| r.cold_start).map(|r| r.latency_ms).collect();
    let hot: Vec<f64> = runs.iter().filter(|r| !r.cold_start).map(|r| r.latency_ms).collect();
    let (cold_mean_ms, cold_std_ms) = mean_std(&cold);
    let (hot_mean_ms, hot_std_ms) = mean_std(&hot);
    BenchSummary {
        cold_mean_ms,
        cold_std_ms,
        hot_mean_ms,
        hot_std_ms,
    }
}

/// N cold runs (evict-before-invoke) and N hot runs (back-to-back) against
/// an in-process simulator.
pub async fn run_coldhot(
    runs: usize,
    cold_delay: u64,
    jitter: u64,
    seed: Option<u64>,
) -> Result<BenchResult, String> {
    let seed = seed.or_else(|| {
        std::env::var("FLOWFAAS_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    let sim = Simulator::new(PoolConfig {
        cold_start_delay_ms: cold_delay,
        jitter_ms: jitter,
        seed,
        ..PoolConfig::default()
    });
    sim.register_action(ActionDescriptor::builtin("hello", "hello"))
        .map_err(|e| e.to_string())?;

    let mut records = Vec::with_capacity(runs * 2);
    for i in 0..runs {
        sim.evict_all_idle();
        let started = Instant::now();
        let activation = sim
            .invoke("hello", json!({ "name": "bench" }))
            .await
            .map_err(|e| e.to_string())?;
        if !activation.cold_start {
            return Err(format!("run {i}: expected a cold start after eviction"));
        }
        records.push(BenchRun {
            run_index: i,
            cold_start: true,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
    }

    // warm the container, then measure hot invocations back-to-back
    sim.invoke("hello", json!({ "name": "warmup" }))
        .await
        .map_err(|e| e.to_string())?;
    for i in 0..runs {
        let started = Instant::now();
        let activation = sim
            .invoke("hello", json!({ "name": "bench" }))
            .await
            .map_err(|e| e.to_string())?;
        if activation.cold_start {
            return Err(format!("hot run {i}: unexpected cold start"));
        }
        records.push(BenchRun {
            run_index: runs + i,
            cold_start: false,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        });
    }

    let summary = summarize(&records);
    Ok(BenchResult {
        runs: records,
        summary,
    })
}

pub async fn coldhot(
    runs: usize,
    cold_delay: u64,
    jitter: u64,
    seed: Option<u64>,
    output: Option<&PathBuf>,
) -> Result<(), u8> {
    let result = run_coldhot(runs, cold_delay, jitter, seed).await.map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;
    if let Some(path) = output {
        let mut writer = csv::Writer::from_path(path).map_err(|e| {
            eprintln!("cannot write {}: {e}", path.display());
            EXIT_DOMAIN
        })?;
        writer
            .write_record(["runIndex", "coldStart", "latencyMs"])
            .ok();
        for run in &result.runs {
            writer
                .write_record([
                    run.run_index.to_string(),
                    run.cold_start.to_string(),
                    format!("{:.3}", run.latency_ms),
                ])
                .ok();
        }
        writer.flush().ok();
    }
    println!("{}", serde_json::to_string_pretty(&result.summary).unwrap());
    Ok(())
}

pub async fn etl(
    up_s: u64,
    down_s: u64,
    rate_hz: f64,
    duration_s: u64,
    resubmit_s: u64,
    output: Option<&PathBuf>,
    spool: Option<PathBuf>,
) -> Result<(), u8> {
    let spool_dir;
    let spool_path = match spool {
        Some(p) => p,
        None => {
            spool_dir = std::env::temp_dir().join(format!("flowfaas-etl-{}", std::process::id()));
            spool_dir.join("spool.log")
        }
    };
    let config = ExperimentConfig {
        mode: SinkMode::Schedule(OutageSchedule {
            up_ms: up_s * 1000,
            down_ms: down_s * 1000,
        }),
        rate_hz,
        duration_ms: duration_s * 1000,
        max_immediate_retries: 5,
        resubmit_interval_ms: resubmit_s * 1000,
        probe_before_drain: true,
        spool_path,
        drain_grace_ms: 30_000,
    };
    let report = run_experiment(config).await.map_err(|e| {
        eprintln!("{e}");
        EXIT_DOMAIN
    })?;

    if let Some(path) = output {
        let mut writer = csv::Writer::from_path(path).map_err(|e| {
            eprintln!("cannot write {}: {e}", path.display());
            EXIT_DOMAIN
        })?;
        writer.write_record(["elapsedMs", "spoolSize"]).ok();
        for (t, size) in &report.spool_series {
            writer
                .write_record([t.to_string(), size.to_string()])
                .ok();
        }
        writer.flush().ok();
    }

    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "injected": report.injected,
            "delivered": report.delivered,
            "duplicates": report.duplicates,
            "lost": report.lost_ids.len(),
            "maxSpoolSize": report.max_spool_size,
            "finalSpoolSize": report.final_spool_size,
            "drainCycles": report.drain_cycles(),
        }))
        .unwrap()
    );
    if report.lost_ids.is_empty() {
        Ok(())
    } else {
        eprintln!("data loss detected: {} items", report.lost_ids.len());
        Err(EXIT_DOMAIN)
    }
}
