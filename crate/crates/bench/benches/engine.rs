//! Criterion microbenchmarks for the hot paths: flow parsing and subflow
//! expansion, fork-join execution, annotation embedding and spool writes.

use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use serde_json::{json, Value};

use flowfaas_core::annotations::{embed, extract_node_annotations, strip};
use flowfaas_core::etl::{DataItem, DeliveryState, SpoolStore};
use flowfaas_core::flow::{expand_subflows, parse_flow};
use flowfaas_core::runtime::{start, HandlerRegistry, RuntimeConfig, RuntimeHandle};
use flowfaas_core::seqcomp::{compile_sequence, CompileOptions};
use flowfaas_core::sim::{ActionDescriptor, PoolConfig, Simulator};

fn fixture(name: &str) -> String {
    let path = format!("{}/../../flows/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture readable")
}

fn bench_parse_and_expand(c: &mut Criterion) {
    let text = fixture("splitjoin.json");
    c.bench_function("parse_flow/splitjoin", |b| {
        b.iter(|| parse_flow(std::hint::black_box(&text)).unwrap())
    });
    let graph = parse_flow(&text).unwrap();
    c.bench_function("expand_subflows/splitjoin", |b| {
        b.iter(|| expand_subflows(std::hint::black_box(&graph)).unwrap())
    });
}

fn forkjoin_handle(split_size: u64) -> RuntimeHandle {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "bench" },
        { "id": "chunk", "type": "split", "z": "t1", "splitSize": split_size, "wires": [["work"]] },
        { "id": "work", "type": "action-invoke", "z": "t1", "action": "identity", "wires": [["collect"]] },
        { "id": "collect", "type": "join", "z": "t1", "wires": [[]] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let sim = Simulator::new(PoolConfig::instant());
    sim.register_action(ActionDescriptor::builtin("identity", "identity"))
        .unwrap();
    let config = RuntimeConfig {
        invoker: Some(Arc::new(sim)),
        ..RuntimeConfig::default()
    };
    start(graph, HandlerRegistry::with_builtins(), config).unwrap()
}

fn bench_fork_join(c: &mut Criterion) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut group = c.benchmark_group("fork_join");
    group.sample_size(20);
    for &len in &[100usize, 1000] {
        let handle = rt.block_on(async { forkjoin_handle(10) });
        let input: Vec<Value> = (0..len as i64).map(Value::from).collect();
        group.bench_with_input(BenchmarkId::from_parameter(len), &input, |b, input| {
            b.iter(|| {
                rt.block_on(async {
                    handle
                        .run_to_completion("chunk", Value::Array(input.clone()), Duration::from_secs(30))
                        .await
                        .unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bench_annotations(c: &mut Criterion) {
    let text = fixture("annotated.json");
    let graph = parse_flow(&text).unwrap();
    let (triples, _) = extract_node_annotations(&graph).unwrap();
    c.bench_function("annotations/embed_strip", |b| {
        b.iter(|| {
            let annotated = embed(std::hint::black_box(&graph), &triples);
            strip(&annotated.embedded).unwrap()
        })
    });
}

fn bench_compile_sequence(c: &mut Criterion) {
    let graph = parse_flow(&fixture("chain.json")).unwrap();
    c.bench_function("compile_sequence/chain", |b| {
        b.iter(|| {
            compile_sequence(
                std::hint::black_box(&graph),
                "pipeline",
                &[],
                CompileOptions { strip_side_effects: true },
            )
            .unwrap()
        })
    });
}

fn bench_spool(c: &mut Criterion) {
    c.bench_function("spool/put_delete", |b| {
        let dir = tempfile::tempdir().unwrap();
        let spool = SpoolStore::open(&dir.path().join("bench.log")).unwrap();
        let mut seq = 0u64;
        b.iter(|| {
            let id = format!("item-{seq}");
            seq += 1;
            spool
                .put(&DataItem {
                    item_id: id.clone(),
                    created_at_ms: 0,
                    payload: json!({ "seq": seq }),
                    attempts: 1,
                    state: DeliveryState::Spooled,
                })
                .unwrap();
            spool.delete(&id).unwrap();
        })
    });
}

criterion_group!(
    benches,
    bench_parse_and_expand,
    bench_fork_join,
    bench_annotations,
    bench_compile_sequence,
    bench_spool
);
criterion_main!(benches);
