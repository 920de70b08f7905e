//! Runtime engine integration tests: message flow, fork-join behavior,
//! invocation concurrency and fault propagation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use flowfaas_core::flow::{expand_subflows, parse_flow};
use flowfaas_core::runtime::{
    start, ActionInvoker, HandlerRegistry, Message, RuntimeConfig, RuntimeError,
};
use flowfaas_core::sim::{PoolConfig, Simulator};
use serde_json::{json, Value};

fn fixture(name: &str) -> String {
    let path = format!("{}/../../flows/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture readable")
}

const RUN_TIMEOUT: Duration = Duration::from_secs(10);

/// Invoker that applies increment element-wise and tracks the number of
/// concurrently outstanding invocations.
struct CountingInvoker {
    active: AtomicUsize,
    peak: AtomicUsize,
    total: AtomicUsize,
    delay: Duration,
}

impl CountingInvoker {
    fn new(delay: Duration) -> Self {
        CountingInvoker {
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
            delay,
        }
    }
}

#[async_trait]
impl ActionInvoker for CountingInvoker {
    async fn invoke_action(&self, action: &str, params: Value) -> Result<Value, RuntimeError> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.total.fetch_add(1, Ordering::SeqCst);
        tokio::time::sleep(self.delay).await;
        self.active.fetch_sub(1, Ordering::SeqCst);
        match action {
            "increment" => {
                let items = params
                    .as_array()
                    .ok_or_else(|| RuntimeError::InvokeError("expected array".into()))?;
                let out: Vec<Value> = items
                    .iter()
                    .map(|v| json!(v.as_i64().unwrap_or(0) + 1))
                    .collect();
                Ok(json!(out))
            }
            "boom" => Err(RuntimeError::InvokeError("worker exploded".into())),
            other => Err(RuntimeError::InvokeError(format!("unknown action {other}"))),
        }
    }
}

fn forkjoin_handle(
    invoker: Arc<dyn ActionInvoker>,
    config_tweak: impl FnOnce(&mut RuntimeConfig),
) -> flowfaas_core::runtime::RuntimeHandle {
    let graph = parse_flow(&fixture("splitjoin.json")).unwrap();
    let expanded = expand_subflows(&graph).unwrap();
    let mut config = RuntimeConfig {
        invoker: Some(invoker),
        ..RuntimeConfig::default()
    };
    config_tweak(&mut config);
    start(expanded, HandlerRegistry::with_builtins(), config).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn forkjoin_preserves_order_and_wraps_result() {
    let invoker = Arc::new(CountingInvoker::new(Duration::from_millis(5)));
    let handle = forkjoin_handle(invoker.clone(), |_| {});
    let out = handle
        .run_to_completion("feed", json!([1, 2, 3, 4, 5, 6, 7]), RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(out.payload, json!({ "result": [2, 3, 4, 5, 6, 7, 8] }));
    // splitSize 3 over 7 elements -> ceil(7/3) chunks
    assert_eq!(invoker.total.load(Ordering::SeqCst), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn forkjoin_empty_array_yields_empty_result() {
    let invoker = Arc::new(CountingInvoker::new(Duration::ZERO));
    let handle = forkjoin_handle(invoker.clone(), |_| {});
    let out = handle
        .run_to_completion("feed", json!([]), RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(out.payload, json!({ "result": [] }));
    // the control record passes through without invoking the worker
    assert_eq!(invoker.total.load(Ordering::SeqCst), 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn forkjoin_non_array_faults_the_message() {
    let invoker = Arc::new(CountingInvoker::new(Duration::ZERO));
    let handle = forkjoin_handle(invoker, |_| {});
    let err = handle
        .run_to_completion("feed", json!("not an array"), RUN_TIMEOUT)
        .await
        .unwrap_err();
    assert!(matches!(err, RuntimeError::NotAnArray));
}

#[tokio::test(flavor = "multi_thread")]
async fn invocation_window_caps_concurrency() {
    let invoker = Arc::new(CountingInvoker::new(Duration::from_millis(20)));
    let handle = forkjoin_handle(invoker.clone(), |c| c.max_concurrent_invocations = 4);
    // 60 elements / splitSize 3 = 20 chunks, far above the window of 4
    let input: Vec<i64> = (0..60).collect();
    let expected: Vec<i64> = (1..=60).collect();
    let out = handle
        .run_to_completion("feed", json!(input), RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(out.payload, json!({ "result": expected }));
    assert_eq!(invoker.total.load(Ordering::SeqCst), 20);
    let peak = invoker.peak.load(Ordering::SeqCst);
    assert!(peak <= 4, "peak concurrency {peak} exceeded the window");
    assert!(peak >= 2, "invocations never overlapped");
}

#[tokio::test(flavor = "multi_thread")]
async fn worker_failure_faults_the_whole_group() {
    let graph = parse_flow(&fixture("splitjoin.json")).unwrap();
    let mut expanded = expand_subflows(&graph).unwrap();
    let node = expanded.nodes.iter_mut().find(|n| n.id == "use.work").unwrap();
    node.props.insert("action".into(), json!("boom"));
    let config = RuntimeConfig {
        invoker: Some(Arc::new(CountingInvoker::new(Duration::ZERO))),
        ..RuntimeConfig::default()
    };
    let handle = start(expanded, HandlerRegistry::with_builtins(), config).unwrap();
    let err = handle
        .run_to_completion("feed", json!([1, 2, 3]), RUN_TIMEOUT)
        .await
        .unwrap_err();
    assert!(matches!(err, RuntimeError::InvokeError(_)));
}

#[tokio::test(flavor = "multi_thread")]
async fn join_times_out_on_missing_parts() {
    // a split whose worker drops every second chunk can never join
    struct Dropper;
    #[async_trait]
    impl ActionInvoker for Dropper {
        async fn invoke_action(&self, _action: &str, params: Value) -> Result<Value, RuntimeError> {
            if params.as_array().is_some_and(|a| a[0].as_i64() == Some(0)) {
                // swallow this part forever
                futures::future::pending::<()>().await;
            }
            Ok(params)
        }
    }
    let handle = forkjoin_handle(Arc::new(Dropper), |c| {
        c.join_timeout = Duration::from_millis(300);
    });
    let err = handle
        .run_to_completion("feed", json!([0, 0, 0, 1, 1, 1]), RUN_TIMEOUT)
        .await
        .unwrap_err();
    match err {
        RuntimeError::JoinTimeout { missing, .. } => assert_eq!(missing, vec![0]),
        other => panic!("expected join timeout, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn simulator_backs_action_invoke_nodes() {
    let sim = Simulator::new(PoolConfig::instant());
    sim.register_action(flowfaas_core::sim::ActionDescriptor::builtin(
        "increment",
        "increment",
    ))
    .unwrap();
    let handle = forkjoin_handle(Arc::new(sim.clone()), |_| {});
    let out = handle
        .run_to_completion("feed", json!([10, 20, 30, 40]), RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(out.payload, json!({ "result": [11, 21, 31, 41] }));
    // ceil(4/3) = 2 activations recorded by the platform
    assert_eq!(sim.activation_log().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn dynamic_action_and_split_size_resolve_from_message() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "dyn" },
        { "id": "chunk", "type": "split", "z": "t1", "splitSize": "msg.fields.splitSize", "wires": [["work"]] },
        { "id": "work", "type": "action-invoke", "z": "t1", "action": "msg.fields.action", "wires": [["collect"]] },
        { "id": "collect", "type": "join", "z": "t1", "wires": [[]] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let sim = Simulator::new(PoolConfig::instant());
    sim.register_action(flowfaas_core::sim::ActionDescriptor::builtin("square", "square"))
        .unwrap();
    let config = RuntimeConfig {
        invoker: Some(Arc::new(sim.clone())),
        ..RuntimeConfig::default()
    };
    let handle = start(graph, HandlerRegistry::with_builtins(), config).unwrap();

    let mut msg = Message::fresh(json!([1, 2, 3, 4, 5]));
    msg.fields.insert("action".into(), json!("square"));
    msg.fields.insert("splitSize".into(), json!(2));
    let out = handle
        .run_message_to_completion("chunk", msg, RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(out.payload, json!([1, 4, 9, 16, 25]));
    assert_eq!(sim.activation_log().len(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn service_flow_answers_http_requests() {
    let graph = parse_flow(&fixture("hello-service.json")).unwrap();
    let handle = start(graph, HandlerRegistry::with_builtins(), RuntimeConfig::default()).unwrap();
    assert_eq!(handle.http_routes().len(), 1);
    let (_, path, node_id) = &handle.http_routes()[0];
    assert_eq!(path, "/hello");

    let response = handle
        .handle_http_request(node_id, json!({ "name": "ada" }), RUN_TIMEOUT)
        .await
        .unwrap();
    assert_eq!(response.payload, json!({ "greeting": "ada" }));
    assert_eq!(response.fields.get("statusCode"), Some(&json!(200)));
}

#[tokio::test(flavor = "multi_thread")]
async fn duplicate_http_routes_fail_startup() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "dup" },
        { "id": "a", "type": "http-in", "z": "t1", "method": "POST", "path": "/x", "wires": [["r"]] },
        { "id": "b", "type": "http-in", "z": "t1", "method": "POST", "path": "/x", "wires": [["r"]] },
        { "id": "r", "type": "http-response", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let Err(err) = start(graph, HandlerRegistry::with_builtins(), RuntimeConfig::default()) else {
        panic!("duplicate routes must be rejected");
    };
    assert!(matches!(err, RuntimeError::BindError(_)));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_node_type_fails_startup() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "bad" },
        { "id": "a", "type": "mystery", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let Err(err) = start(graph, HandlerRegistry::with_builtins(), RuntimeConfig::default()) else {
        panic!("unknown node types must be rejected");
    };
    assert!(matches!(err, RuntimeError::UnknownType(t) if t == "mystery"));
}

#[tokio::test(flavor = "multi_thread")]
async fn debug_nodes_record_messages() {
    let handle = forkjoin_handle(Arc::new(CountingInvoker::new(Duration::ZERO)), |_| {});
    handle
        .run_to_completion("feed", json!([5]), RUN_TIMEOUT)
        .await
        .unwrap();
    let records = handle.debug_records();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].node_id, "log");
    assert_eq!(records[0].payload, json!({ "result": [6] }));
}

#[tokio::test(flavor = "multi_thread")]
async fn fan_out_targets_get_independent_copies() {
    // one inject feeding two function branches that mutate differently
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "fan" },
        { "id": "feed", "type": "inject", "z": "t1", "wires": [["left", "right"]] },
        { "id": "left", "type": "function", "z": "t1",
          "transform": [{ "op": "set", "to": "payload.branch", "value": "left" }],
          "wires": [["sinkL"]] },
        { "id": "right", "type": "function", "z": "t1",
          "transform": [{ "op": "set", "to": "payload.branch", "value": "right" }],
          "wires": [["sinkR"]] },
        { "id": "sinkL", "type": "debug", "z": "t1", "wires": [] },
        { "id": "sinkR", "type": "debug", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let handle = start(graph, HandlerRegistry::with_builtins(), RuntimeConfig::default()).unwrap();
    handle.inject("feed", json!({})).unwrap();

    // wait until both branches logged
    let deadline = tokio::time::Instant::now() + RUN_TIMEOUT;
    loop {
        if handle.debug_records().len() == 2 {
            break;
        }
        assert!(tokio::time::Instant::now() < deadline, "branches never completed");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let mut branches: Vec<Value> = handle
        .debug_records()
        .iter()
        .map(|r| r.payload["branch"].clone())
        .collect();
    branches.sort_by_key(|v| v.as_str().unwrap().to_string());
    assert_eq!(branches, vec![json!("left"), json!("right")]);
}
