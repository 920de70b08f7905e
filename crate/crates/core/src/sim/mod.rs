//! Local FaaS platform with an OpenWhisk-flavored REST API: action
//! registry, container pool with cold/hot semantics, sequences, activation
//! log and a billing ledger.
//!
//! Cold-start cost is a configurable delay (mean + uniform jitter), not a
//! real container boot; re-registering an action invalidates its warm
//! containers so the next invoke is cold again.

mod handlers;
mod http;
mod pool;

pub use handlers::builtin_handlers;
pub use http::{router, serve};
pub use pool::{PoolConfig, PoolMetrics};

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures::future::BoxFuture;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use pool::Pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionKind {
    BuiltinHandler,
    ProtocolEndpoint,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    #[serde(rename = "memoryMB", default = "default_memory")]
    pub memory_mb: u64,
    #[serde(rename = "timeoutMs", default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_memory() -> u64 {
    256
}
fn default_timeout() -> u64 {
    60_000
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            memory_mb: default_memory(),
            timeout_ms: default_timeout(),
        }
    }
}

/// A registered function. Exactly one of `handler_name`, `endpoint_url`,
/// `components` is populated, matching `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionDescriptor {
    pub name: String,
    pub kind: ActionKind,
    #[serde(rename = "handlerName", skip_serializing_if = "Option::is_none")]
    pub handler_name: Option<String>,
    #[serde(rename = "endpointUrl", skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub annotations: BTreeMap<String, Value>,
}

impl ActionDescriptor {
    pub fn builtin(name: &str, handler: &str) -> Self {
        ActionDescriptor {
            name: name.into(),
            kind: ActionKind::BuiltinHandler,
            handler_name: Some(handler.into()),
            endpoint_url: None,
            components: None,
            limits: Limits::default(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn endpoint(name: &str, url: &str) -> Self {
        ActionDescriptor {
            name: name.into(),
            kind: ActionKind::ProtocolEndpoint,
            handler_name: None,
            endpoint_url: Some(url.into()),
            components: None,
            limits: Limits::default(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn sequence(name: &str, components: &[&str]) -> Self {
        ActionDescriptor {
            name: name.into(),
            kind: ActionKind::Sequence,
            handler_name: None,
            endpoint_url: None,
            components: Some(components.iter().map(|c| c.to_string()).collect()),
            limits: Limits::default(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn with_annotation(mut self, key: &str, value: Value) -> Self {
        self.annotations.insert(key.into(), value);
        self
    }

    pub fn billing_exempt(&self) -> bool {
        self.annotations
            .get("billingExempt")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActivationStatus {
    Success,
    Error,
    Timeout,
}

/// One recorded invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Activation {
    #[serde(rename = "activationId")]
    pub activation_id: String,
    #[serde(rename = "actionName")]
    pub action_name: String,
    #[serde(rename = "startTime")]
    pub start_ms: u128,
    #[serde(rename = "endTime")]
    pub end_ms: u128,
    #[serde(rename = "coldStart")]
    pub cold_start: bool,
    pub result: Value,
    pub status: ActivationStatus,
    #[serde(rename = "billedMs")]
    pub billed_ms: u128,
    #[serde(rename = "observedMs")]
    pub observed_ms: u128,
    #[serde(rename = "causedBy", skip_serializing_if = "Option::is_none")]
    pub caused_by: Option<String>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("action `{0}` not found")]
    ActionNotFound(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("sequence component `{0}` not registered")]
    MissingComponent(String),
    #[error("container capacity exceeded")]
    CapacityExceeded,
    #[error("activation `{0}` not found")]
    ActivationNotFound(String),
}

/// Async handler executed for builtinHandler actions.
pub type SimHandler =
    Arc<dyn Fn(Value) -> BoxFuture<'static, Result<Value, String>> + Send + Sync>;

/// Per-action billing summary.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LedgerEntry {
    pub invocations: u64,
    #[serde(rename = "billedMs")]
    pub billed_ms: u128,
    #[serde(rename = "observedMs")]
    pub observed_ms: u128,
}

struct Inner {
    registry: Mutex<HashMap<String, ActionDescriptor>>,
    handlers: Mutex<HashMap<String, SimHandler>>,
    activations: Mutex<HashMap<String, Activation>>,
    activation_order: Mutex<Vec<String>>,
    pool: Pool,
    config: PoolConfig,
    rng: Mutex<ChaCha8Rng>,
    epoch: Instant,
    http: reqwest::Client,
}

/// Handle to the simulator; cheap to clone and share.
#[derive(Clone)]
pub struct Simulator {
    inner: Arc<Inner>,
}

impl Simulator {
    pub fn new(config: PoolConfig) -> Self {
        let seed = config.seed.unwrap_or_else(rand::random);
        let sim = Simulator {
            inner: Arc::new(Inner {
                registry: Mutex::new(HashMap::new()),
                handlers: Mutex::new(HashMap::new()),
                activations: Mutex::new(HashMap::new()),
                activation_order: Mutex::new(Vec::new()),
                pool: Pool::new(config.clone()),
                config,
                rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
                epoch: Instant::now(),
                http: reqwest::Client::new(),
            }),
        };
        for (name, handler) in builtin_handlers() {
            sim.register_handler(&name, handler);
        }
        sim
    }

    pub fn now_ms(&self) -> u128 {
        self.inner.epoch.elapsed().as_millis()
    }

    pub fn register_handler(&self, name: &str, handler: SimHandler) {
        self.inner
            .handlers
            .lock()
            .unwrap()
            .insert(name.to_string(), handler);
    }

    /// Register a handler from a plain sync closure.
    pub fn register_fn<F>(&self, name: &str, f: F)
    where
        F: Fn(Value) -> Result<Value, String> + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        self.register_handler(
            name,
            Arc::new(move |params| {
                let f = f.clone();
                Box::pin(async move { f(params) })
            }),
        );
    }

    /// Upsert an action. Warm containers of a replaced action are
    /// invalidated so the next invoke is cold.
    pub fn register_action(&self, desc: ActionDescriptor) -> Result<(), SimError> {
        if desc.name.is_empty() {
            return Err(SimError::Validation("action name must be nonempty".into()));
        }
        let populated = [
            desc.handler_name.is_some(),
            desc.endpoint_url.is_some(),
            desc.components.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if populated != 1 {
            return Err(SimError::Validation(
                "exactly one of handlerName/endpointUrl/components must be set".into(),
            ));
        }
        match desc.kind {
            ActionKind::BuiltinHandler if desc.handler_name.is_none() => {
                return Err(SimError::Validation("builtinHandler requires handlerName".into()))
            }
            ActionKind::ProtocolEndpoint if desc.endpoint_url.is_none() => {
                return Err(SimError::Validation("protocolEndpoint requires endpointUrl".into()))
            }
            ActionKind::Sequence => {
                let components = desc
                    .components
                    .as_ref()
                    .ok_or_else(|| SimError::Validation("sequence requires components".into()))?;
                if components.is_empty() {
                    return Err(SimError::Validation("sequence components must be nonempty".into()));
                }
                let registry = self.inner.registry.lock().unwrap();
                for c in components {
                    if !registry.contains_key(c) {
                        return Err(SimError::MissingComponent(c.clone()));
                    }
                }
            }
            _ => {}
        }
        let replaced = self
            .inner
            .registry
            .lock()
            .unwrap()
            .insert(desc.name.clone(), desc.clone())
            .is_some();
        if replaced {
            self.inner.pool.invalidate_action(&desc.name);
        }
        Ok(())
    }

    pub fn action(&self, name: &str) -> Option<ActionDescriptor> {
        self.inner.registry.lock().unwrap().get(name).cloned()
    }

    pub fn activation(&self, id: &str) -> Option<Activation> {
        self.inner.activations.lock().unwrap().get(id).cloned()
    }

    /// All recorded activations in completion order.
    pub fn activation_log(&self) -> Vec<Activation> {
        let order = self.inner.activation_order.lock().unwrap();
        let map = self.inner.activations.lock().unwrap();
        order.iter().filter_map(|id| map.get(id).cloned()).collect()
    }

    pub fn clear_activations(&self) {
        self.inner.activations.lock().unwrap().clear();
        self.inner.activation_order.lock().unwrap().clear();
    }

    pub fn metrics(&self) -> PoolMetrics {
        self.inner.pool.metrics()
    }

    pub fn reset_high_water(&self) {
        self.inner.pool.reset_high_water();
    }

    /// Remove idle containers unused for longer than `idle_eviction_ms`.
    pub fn evict_idle(&self, now_ms: u128) -> usize {
        self.inner
            .pool
            .evict_idle(now_ms, self.inner.config.idle_eviction_ms)
    }

    /// Remove every idle container; busy containers are untouched.
    pub fn evict_all_idle(&self) -> usize {
        self.inner.pool.evict_all_idle()
    }

    /// Blocking invocation. Handler failures yield an activation with
    /// status=error rather than an `Err`.
    pub async fn invoke(&self, name: &str, params: Value) -> Result<Activation, SimError> {
        self.invoke_inner(name.to_string(), params, None).await
    }

    /// Non-blocking invocation: returns the activation id immediately; the
    /// record becomes retrievable once execution completes.
    pub fn invoke_nonblocking(&self, name: &str, params: Value) -> Result<String, SimError> {
        if !self.inner.registry.lock().unwrap().contains_key(name) {
            return Err(SimError::ActionNotFound(name.to_string()));
        }
        let id = new_activation_id();
        let sim = self.clone();
        let name = name.to_string();
        let id_clone = id.clone();
        tokio::spawn(async move {
            let _ = sim.invoke_with_id(name, params, None, id_clone).await;
        });
        Ok(id)
    }

    fn invoke_inner(
        &self,
        name: String,
        params: Value,
        caused_by: Option<String>,
    ) -> BoxFuture<'_, Result<Activation, SimError>> {
        let id = new_activation_id();
        Box::pin(self.invoke_with_id(name, params, caused_by, id))
    }

    async fn invoke_with_id(
        &self,
        name: String,
        params: Value,
        caused_by: Option<String>,
        activation_id: String,
    ) -> Result<Activation, SimError> {
        let desc = self
            .action(&name)
            .ok_or_else(|| SimError::ActionNotFound(name.clone()))?;

        // Sequences run on the pool of their components; the parent record
        // covers the end-to-end span.
        if desc.kind == ActionKind::Sequence {
            return self
                .run_sequence(&desc, params, caused_by, activation_id)
                .await;
        }

        let start_ms = self.now_ms();
        let lease = if self.inner.config.queue_capacity > 0 {
            self.inner.pool.acquire_waiting(&name, start_ms).await?
        } else {
            self.inner.pool.acquire(&name, start_ms)?
        };
        if lease.cold {
            let delay = self.sample_cold_delay();
            tokio::time::sleep(Duration::from_millis(delay)).await;
            self.inner.pool.mark_started(&lease, self.now_ms());
        }

        let timeout = Duration::from_millis(desc.limits.timeout_ms);
        let executed = tokio::time::timeout(timeout, self.execute(&desc, params)).await;
        let end_ms = self.now_ms();
        self.inner.pool.release(&lease, end_ms);

        let (status, result) = match executed {
            Ok(Ok(value)) => (ActivationStatus::Success, value),
            Ok(Err(e)) => (ActivationStatus::Error, json!({ "error": e })),
            Err(_) => (
                ActivationStatus::Timeout,
                json!({ "error": format!("action exceeded timeout of {} ms", desc.limits.timeout_ms) }),
            ),
        };
        let activation = self.record(
            activation_id,
            &desc,
            start_ms,
            end_ms,
            lease.cold,
            status,
            result,
            caused_by,
        );
        Ok(activation)
    }

    async fn run_sequence(
        &self,
        desc: &ActionDescriptor,
        params: Value,
        caused_by: Option<String>,
        activation_id: String,
    ) -> Result<Activation, SimError> {
        let components = desc.components.clone().unwrap_or_default();
        let start_ms = self.now_ms();
        let mut current = params;
        let mut failure: Option<Value> = None;

        for component in &components {
            let child = self
                .invoke_inner(component.clone(), current.clone(), Some(activation_id.clone()))
                .await?;
            match child.status {
                ActivationStatus::Success => current = child.result,
                _ => {
                    // first failing component aborts the sequence
                    failure = Some(child.result);
                    break;
                }
            }
        }
        let end_ms = self.now_ms();
        let (status, result) = match failure {
            None => (ActivationStatus::Success, current),
            Some(err) => (ActivationStatus::Error, err),
        };
        Ok(self.record(
            activation_id,
            desc,
            start_ms,
            end_ms,
            false,
            status,
            result,
            caused_by,
        ))
    }

    async fn execute(&self, desc: &ActionDescriptor, params: Value) -> Result<Value, String> {
        match desc.kind {
            ActionKind::BuiltinHandler => {
                let name = desc.handler_name.as_deref().unwrap_or_default();
                let handler = self
                    .inner
                    .handlers
                    .lock()
                    .unwrap()
                    .get(name)
                    .cloned()
                    .ok_or_else(|| format!("handler `{name}` not registered"))?;
                handler(params).await
            }
            ActionKind::ProtocolEndpoint => {
                let url = desc.endpoint_url.as_deref().unwrap_or_default();
                let resp = self
                    .inner
                    .http
                    .post(format!("{}/run", url.trim_end_matches('/')))
                    .json(&json!({ "value": params }))
                    .send()
                    .await
                    .map_err(|e| format!("endpoint unreachable: {e}"))?;
                let status = resp.status();
                let body: Value = resp
                    .json()
                    .await
                    .map_err(|e| format!("endpoint returned non-JSON body: {e}"))?;
                if status.is_success() {
                    Ok(body)
                } else {
                    Err(format!("endpoint returned {status}: {body}"))
                }
            }
            ActionKind::Sequence => unreachable!("sequences handled separately"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        activation_id: String,
        desc: &ActionDescriptor,
        start_ms: u128,
        end_ms: u128,
        cold_start: bool,
        status: ActivationStatus,
        result: Value,
        caused_by: Option<String>,
    ) -> Activation {
        let duration = end_ms.saturating_sub(start_ms);
        let activation = Activation {
            activation_id: activation_id.clone(),
            action_name: desc.name.clone(),
            start_ms,
            end_ms,
            cold_start,
            result,
            status,
            billed_ms: if desc.billing_exempt() { 0 } else { duration },
            observed_ms: duration,
            caused_by,
        };
        self.inner
            .activations
            .lock()
            .unwrap()
            .insert(activation_id.clone(), activation.clone());
        self.inner.activation_order.lock().unwrap().push(activation_id);
        activation
    }

    fn sample_cold_delay(&self) -> u64 {
        let mean = self.inner.config.cold_start_delay_ms;
        let jitter = self.inner.config.jitter_ms;
        if jitter == 0 {
            return mean;
        }
        let mut rng = self.inner.rng.lock().unwrap();
        let offset = rng.gen_range(0..=2 * jitter) as i64 - jitter as i64;
        (mean as i64 + offset).max(0) as u64
    }

    /// Per-action totals over `[start_ms, end_ms)`; `None` bounds are open.
    pub fn billing_report(
        &self,
        start_ms: Option<u128>,
        end_ms: Option<u128>,
    ) -> BTreeMap<String, LedgerEntry> {
        let mut report: BTreeMap<String, LedgerEntry> = BTreeMap::new();
        for activation in self.activation_log() {
            if start_ms.is_some_and(|s| activation.start_ms < s)
                || end_ms.is_some_and(|e| activation.start_ms >= e)
            {
                continue;
            }
            let entry = report.entry(activation.action_name.clone()).or_default();
            entry.invocations += 1;
            entry.billed_ms += activation.billed_ms;
            entry.observed_ms += activation.observed_ms;
        }
        report
    }
}

fn new_activation_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// In-process invoker: lets a runtime drive the simulator without the HTTP
/// hop. Failed activations surface as invoke errors.
#[async_trait::async_trait]
impl crate::runtime::ActionInvoker for Simulator {
    async fn invoke_action(
        &self,
        action: &str,
        params: Value,
    ) -> Result<Value, crate::runtime::RuntimeError> {
        let activation = self
            .invoke(action, params)
            .await
            .map_err(|e| crate::runtime::RuntimeError::InvokeError(e.to_string()))?;
        match activation.status {
            ActivationStatus::Success => Ok(activation.result),
            _ => Err(crate::runtime::RuntimeError::InvokeError(
                activation.result.to_string(),
            )),
        }
    }
}
