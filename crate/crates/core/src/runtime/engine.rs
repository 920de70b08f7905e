use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde_json::Value;
use tokio::sync::{mpsc, oneshot, Semaphore};

use crate::flow::{FlowGraph, NodeSpec, BUILTIN_NODE_TYPES};

use super::message::Message;
use super::registry::HandlerRegistry;
use super::split_join::{exec_join, exec_split, JoinState};
use super::transform::{exec_transform, TransformSpec};
use super::RuntimeError;

/// Invokes a named action on a FaaS platform. Implemented by the HTTP
/// action client and, for tests, by in-process fakes.
#[async_trait]
pub trait ActionInvoker: Send + Sync {
    async fn invoke_action(&self, action: &str, params: Value) -> Result<Value, RuntimeError>;
}

/// No-platform default; action-invoke nodes fail loudly if no invoker is
/// configured.
struct NoInvoker;

#[async_trait]
impl ActionInvoker for NoInvoker {
    async fn invoke_action(&self, action: &str, _params: Value) -> Result<Value, RuntimeError> {
        Err(RuntimeError::InvokeError(format!(
            "no action invoker configured (action `{action}`)"
        )))
    }
}

#[derive(Clone)]
pub struct RuntimeConfig {
    pub max_concurrent_invocations: usize,
    pub join_timeout: Duration,
    pub invoker: Option<Arc<dyn ActionInvoker>>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            max_concurrent_invocations: 16,
            join_timeout: Duration::from_secs(30),
            invoker: None,
        }
    }
}

/// One record appended by a debug node.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DebugRecord {
    #[serde(rename = "msgId")]
    pub msg_id: String,
    #[serde(rename = "nodeId")]
    pub node_id: String,
    pub payload: Value,
    pub timestamp: u128,
}

type Waiter = oneshot::Sender<Result<Message, RuntimeError>>;

struct Shared {
    senders: BTreeMap<String, mpsc::UnboundedSender<Message>>,
    waiters: Mutex<HashMap<String, Vec<(String, Waiter)>>>,
    responders: Mutex<HashMap<String, oneshot::Sender<Message>>>,
    debug_log: Mutex<Vec<DebugRecord>>,
    registry: HandlerRegistry,
    invoker: Arc<dyn ActionInvoker>,
    invoke_gate: Arc<Semaphore>,
    join_timeout: Duration,
    started_at: Instant,
    inflight: AtomicI64,
}

impl Shared {
    fn now_ms(&self) -> u128 {
        self.started_at.elapsed().as_millis()
    }

    fn deliver(&self, node_id: &str, msg: Message) {
        if let Some(tx) = self.senders.get(node_id) {
            self.inflight.fetch_add(1, Ordering::Relaxed);
            let _ = tx.send(msg);
        }
    }

    /// Fan out a message to every target of every output port; each target
    /// receives an independent deep copy.
    fn forward(&self, node: &NodeSpec, msg: &Message) {
        for port in &node.wires {
            for target in port {
                self.deliver(target, msg.clone());
            }
        }
    }

    fn complete(&self, terminal_node: &str, msg: &Message) {
        let mut waiters = self.waiters.lock().unwrap();
        if let Some(entries) = waiters.get_mut(&msg.msg_id) {
            let mut kept = Vec::new();
            for (node, tx) in entries.drain(..) {
                if node == terminal_node || node.is_empty() {
                    let _ = tx.send(Ok(msg.clone()));
                } else {
                    kept.push((node, tx));
                }
            }
            if kept.is_empty() {
                waiters.remove(&msg.msg_id);
            } else {
                waiters.insert(msg.msg_id.clone(), kept);
            }
        }
    }

    fn fault(&self, msg_id: &str, err: RuntimeError) {
        let mut waiters = self.waiters.lock().unwrap();
        if let Some(entries) = waiters.remove(msg_id) {
            for (_, tx) in entries {
                let _ = tx.send(Err(err.clone()));
            }
        }
    }
}

/// A started flow: node executors wired up and accepting injections.
pub struct RuntimeHandle {
    shared: Arc<Shared>,
    graph: FlowGraph,
    terminal: Option<String>,
    routes: Vec<(String, String, String)>,
}

/// Instantiate executors for every node of a validated, expanded graph.
/// Fails fast on unknown node types and conflicting http-in routes.
pub fn start(
    graph: FlowGraph,
    registry: HandlerRegistry,
    config: RuntimeConfig,
) -> Result<RuntimeHandle, RuntimeError> {
    let known = registry.known_names();
    for node in &graph.nodes {
        let builtin = BUILTIN_NODE_TYPES.contains(&node.node_type.as_str());
        if !builtin && !known.contains(&node.node_type) {
            return Err(RuntimeError::UnknownType(node.node_type.clone()));
        }
    }

    let mut routes: Vec<(String, String, String)> = Vec::new();
    for node in graph.nodes.iter().filter(|n| n.node_type == "http-in") {
        let method = node
            .prop_str("method")
            .unwrap_or_else(|| "POST".into())
            .to_uppercase();
        let path = node.prop_str("path").unwrap_or_default();
        if routes.iter().any(|(m, p, _)| *m == method && *p == path) {
            return Err(RuntimeError::BindError(format!(
                "duplicate http-in route {method} {path}"
            )));
        }
        routes.push((method, path, node.id.clone()));
    }

    let (senders, receivers): (BTreeMap<_, _>, Vec<_>) = graph
        .nodes
        .iter()
        .map(|n| {
            let (tx, rx) = mpsc::unbounded_channel();
            ((n.id.clone(), tx), (n.clone(), rx))
        })
        .unzip();

    let shared = Arc::new(Shared {
        senders,
        waiters: Mutex::new(HashMap::new()),
        responders: Mutex::new(HashMap::new()),
        debug_log: Mutex::new(Vec::new()),
        registry,
        invoker: config.invoker.unwrap_or_else(|| Arc::new(NoInvoker)),
        invoke_gate: Arc::new(Semaphore::new(config.max_concurrent_invocations)),
        join_timeout: config.join_timeout,
        started_at: Instant::now(),
        inflight: AtomicI64::new(0),
    });

    for (node, rx) in receivers {
        tokio::spawn(node_task(shared.clone(), node, rx));
    }

    // arm inject nodes with a repeat schedule
    for node in graph.nodes.iter().filter(|n| n.node_type == "inject") {
        if let Some(secs) = node.prop_u64("repeat") {
            if secs > 0 {
                let shared = shared.clone();
                let node_id = node.id.clone();
                let payload = node.props.get("payload").cloned().unwrap_or(Value::Null);
                tokio::spawn(async move {
                    let mut tick = tokio::time::interval(Duration::from_secs(secs));
                    tick.tick().await;
                    loop {
                        tick.tick().await;
                        shared.deliver(&node_id, Message::fresh(payload.clone()));
                    }
                });
            }
        }
    }

    let sinks: Vec<String> = graph
        .nodes
        .iter()
        .filter(|n| n.node_type != "annotation")
        .filter(|n| n.wires.iter().all(|p| p.is_empty()))
        .map(|n| n.id.clone())
        .collect();
    let terminal = match sinks.as_slice() {
        [single] => Some(single.clone()),
        _ => graph
            .nodes
            .iter()
            .find(|n| n.node_type == "http-response")
            .map(|n| n.id.clone()),
    };

    Ok(RuntimeHandle {
        shared,
        graph,
        terminal,
        routes,
    })
}

impl RuntimeHandle {
    pub fn graph(&self) -> &FlowGraph {
        &self.graph
    }

    /// (method, path, node id) for every http-in node.
    pub fn http_routes(&self) -> &[(String, String, String)] {
        &self.routes
    }

    pub fn inflight(&self) -> i64 {
        self.shared.inflight.load(Ordering::Relaxed)
    }

    pub fn set_terminal(&mut self, node_id: impl Into<String>) {
        self.terminal = Some(node_id.into());
    }

    pub fn terminal(&self) -> Option<&str> {
        self.terminal.as_deref()
    }

    pub fn debug_records(&self) -> Vec<DebugRecord> {
        self.shared.debug_log.lock().unwrap().clone()
    }

    /// Inject a fresh message at `node_id`; returns its msg id.
    pub fn inject(&self, node_id: &str, payload: Value) -> Result<String, RuntimeError> {
        if !self.shared.senders.contains_key(node_id) {
            return Err(RuntimeError::UnknownNode(node_id.to_string()));
        }
        let msg = Message::fresh(payload);
        let id = msg.msg_id.clone();
        self.shared.deliver(node_id, msg);
        Ok(id)
    }

    /// Inject at `node_id` and wait for the message with the same id to
    /// reach the terminal node.
    pub async fn run_to_completion(
        &self,
        node_id: &str,
        payload: Value,
        timeout: Duration,
    ) -> Result<Message, RuntimeError> {
        self.run_message_to_completion(node_id, Message::fresh(payload), timeout)
            .await
    }

    /// Like [`run_to_completion`](Self::run_to_completion) but with a
    /// caller-built message (extra fields preserved).
    pub async fn run_message_to_completion(
        &self,
        node_id: &str,
        msg: Message,
        timeout: Duration,
    ) -> Result<Message, RuntimeError> {
        if !self.shared.senders.contains_key(node_id) {
            return Err(RuntimeError::UnknownNode(node_id.to_string()));
        }
        let terminal = self.terminal.clone().unwrap_or_default();
        let msg_id = msg.msg_id.clone();
        let (tx, rx) = oneshot::channel();
        self.shared
            .waiters
            .lock()
            .unwrap()
            .entry(msg_id.clone())
            .or_default()
            .push((terminal, tx));
        self.shared.deliver(node_id, msg);

        match tokio::time::timeout(timeout, rx).await {
            Ok(Ok(result)) => result,
            Ok(Err(_)) => Err(RuntimeError::RuntimeFault("engine shut down".into())),
            Err(_) => {
                self.shared.waiters.lock().unwrap().remove(&msg_id);
                Err(RuntimeError::Timeout)
            }
        }
    }

    /// Deliver an external HTTP request to an http-in node and wait for the
    /// flow's http-response.
    pub async fn handle_http_request(
        &self,
        node_id: &str,
        payload: Value,
        timeout: Duration,
    ) -> Result<Message, RuntimeError> {
        if !self.shared.senders.contains_key(node_id) {
            return Err(RuntimeError::UnknownNode(node_id.to_string()));
        }
        let msg = Message::fresh(payload);
        let msg_id = msg.msg_id.clone();
        let (tx, rx) = oneshot::channel();
        self.shared
            .responders
            .lock()
            .unwrap()
            .insert(msg_id.clone(), tx);
        self.shared.deliver(node_id, msg);
        match tokio::time::timeout(timeout, rx).await {
            Ok(Ok(msg)) => Ok(msg),
            Ok(Err(_)) => Err(RuntimeError::RuntimeFault("engine shut down".into())),
            Err(_) => {
                self.shared.responders.lock().unwrap().remove(&msg_id);
                Err(RuntimeError::Timeout)
            }
        }
    }
}

async fn node_task(
    shared: Arc<Shared>,
    node: NodeSpec,
    mut rx: mpsc::UnboundedReceiver<Message>,
) {
    let mut join_state = JoinState::new();
    let is_join = node.node_type == "join";
    let mut sweep = tokio::time::interval(Duration::from_millis(100));
    sweep.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    loop {
        let msg = if is_join {
            tokio::select! {
                m = rx.recv() => match m { Some(m) => m, None => break },
                _ = sweep.tick() => {
                    let deadline = shared
                        .now_ms()
                        .saturating_sub(shared.join_timeout.as_millis());
                    for (group, missing) in join_state.take_expired(deadline) {
                        shared.fault(&group, RuntimeError::JoinTimeout { group: group.clone(), missing });
                    }
                    continue;
                }
            }
        } else {
            match rx.recv().await {
                Some(m) => m,
                None => break,
            }
        };

        process(&shared, &node, msg, &mut join_state).await;
        shared.inflight.fetch_sub(1, Ordering::Relaxed);
    }
}

async fn process(shared: &Arc<Shared>, node: &NodeSpec, msg: Message, join_state: &mut JoinState) {
    let is_sink = node.node_type != "annotation" && node.wires.iter().all(|p| p.is_empty());
    match node.node_type.as_str() {
        "inject" => {
            // external injections pass through; a payload prop overrides
            // null payloads (editor-style inject button)
            let mut msg = msg;
            if msg.payload.is_null() {
                if let Some(p) = node.props.get("payload") {
                    msg.payload = p.clone();
                }
            }
            shared.forward(node, &msg);
        }
        "function" => {
            // empty-group control records pass through untouched
            if msg.parts.as_ref().is_some_and(|p| p.is_empty_group()) {
                shared.forward(node, &msg);
                return;
            }
            let spec = transform_spec(node);
            match spec.and_then(|s| exec_transform(&s, &shared.registry, msg.clone())) {
                Ok(out) => {
                    shared.forward(node, &out);
                    if is_sink {
                        shared.complete(&node.id, &out);
                    }
                }
                Err(e) => shared.fault(&msg.msg_id, e),
            }
        }
        "split" => {
            // splitSize is a literal count or `msg.<path>`, like `action`
            let size_prop = node.prop_str("splitSize");
            let size = match size_prop.as_deref().and_then(|s| s.strip_prefix("msg.")) {
                Some(path) => msg.get_path(path).and_then(|v| v.as_u64()),
                None => node.prop_u64("splitSize"),
            }
            .unwrap_or(1)
            .max(1) as usize;
            match exec_split(&msg, size) {
                Ok(parts) => {
                    for part in parts {
                        shared.forward(node, &part);
                    }
                }
                Err(e) => shared.fault(&msg.msg_id, e),
            }
        }
        "join" => {
            let group = msg.parts.as_ref().map(|p| p.group_id.clone());
            match exec_join(join_state, msg, shared.now_ms()) {
                Ok(Some(joined)) => {
                    shared.forward(node, &joined);
                    if is_sink {
                        shared.complete(&node.id, &joined);
                    }
                }
                Ok(None) => {}
                Err(e) => {
                    if let Some(g) = group {
                        shared.fault(&g, e);
                    }
                }
            }
        }
        "action-invoke" => {
            if msg.parts.as_ref().is_some_and(|p| p.is_empty_group()) {
                shared.forward(node, &msg);
                return;
            }
            // `action` is a literal name, or `msg.<path>` to resolve the
            // name from the message (orchestrator flows pick the worker
            // action from their input)
            let action_prop = node.prop_str("action").unwrap_or_default();
            let action = match action_prop.strip_prefix("msg.") {
                Some(path) => msg
                    .get_path(path)
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                None => action_prop,
            };
            if action.is_empty() {
                shared.fault(
                    &msg.msg_id,
                    RuntimeError::InvokeError(format!(
                        "node `{}`: could not resolve action name",
                        node.id
                    )),
                );
                return;
            }
            let shared = shared.clone();
            let node = node.clone();
            // dispatch in arrival order, overlap completions up to the
            // invocation window
            tokio::spawn(async move {
                let _permit = shared.invoke_gate.clone().acquire_owned().await.unwrap();
                match shared
                    .invoker
                    .invoke_action(&action, msg.payload.clone())
                    .await
                {
                    Ok(result) => {
                        let mut out = msg;
                        out.payload = result;
                        shared.forward(&node, &out);
                        if node.wires.iter().all(|p| p.is_empty()) {
                            shared.complete(&node.id, &out);
                        }
                    }
                    Err(e) => shared.fault(&msg.msg_id, e),
                }
            });
        }
        "debug" => {
            shared.debug_log.lock().unwrap().push(DebugRecord {
                msg_id: msg.msg_id.clone(),
                node_id: node.id.clone(),
                payload: msg.payload.clone(),
                timestamp: shared.now_ms(),
            });
            shared.complete(&node.id, &msg);
        }
        "http-in" => {
            shared.forward(node, &msg);
        }
        "http-response" => {
            let responder = shared.responders.lock().unwrap().remove(&msg.msg_id);
            if let Some(tx) = responder {
                let _ = tx.send(msg.clone());
            }
            shared.complete(&node.id, &msg);
        }
        "annotation" => {} // inert at runtime
        custom => {
            if msg.parts.as_ref().is_some_and(|p| p.is_empty_group()) {
                shared.forward(node, &msg);
                return;
            }
            match shared.registry.handler(custom) {
                Some(f) => match f(msg.clone()) {
                    Ok(mut out) => {
                        out.msg_id = msg.msg_id.clone();
                        out.parts = msg.parts.clone();
                        shared.forward(node, &out);
                        if is_sink {
                            shared.complete(&node.id, &out);
                        }
                    }
                    Err(e) => shared.fault(&msg.msg_id, e),
                },
                None => shared.fault(&msg.msg_id, RuntimeError::UnknownType(custom.to_string())),
            }
        }
    }
}

fn transform_spec(node: &NodeSpec) -> Result<TransformSpec, RuntimeError> {
    if let Some(handler) = node.prop_str("handler") {
        return Ok(TransformSpec::Handler { handler });
    }
    match node.props.get("transform") {
        Some(spec) => serde_json::from_value(spec.clone())
            .map_err(|e| RuntimeError::HandlerFailed(format!("bad transform spec: {e}"))),
        None => Ok(TransformSpec::Ops(Vec::new())),
    }
}

/// Blocking invocation of a platform action with the message payload as
/// parameters. The response body becomes the new payload; msg id and parts
/// are preserved so fork-join regrouping still works downstream.
pub async fn exec_action_invoke(
    invoker: &dyn ActionInvoker,
    action: &str,
    msg: Message,
) -> Result<Message, RuntimeError> {
    if action.is_empty() {
        return Err(RuntimeError::InvokeError("empty action name".into()));
    }
    let result = invoker.invoke_action(action, msg.payload.clone()).await?;
    let mut out = msg;
    out.payload = result;
    Ok(out)
}

/// Convenience constructor mirroring the free function, so callers can use
/// `RuntimeHandle::start`.
impl RuntimeHandle {
    pub fn start(
        graph: FlowGraph,
        registry: HandlerRegistry,
        config: RuntimeConfig,
    ) -> Result<RuntimeHandle, RuntimeError> {
        start(graph, registry, config)
    }
}
