//! Flow model integration tests: parsing, validation, subflow expansion and
//! chain analysis, including property tests over generated graphs.

use flowfaas_core::flow::{
    analyze_chain, expand_subflows, parse_flow, validate, FlowError, Violation,
};
use proptest::prelude::*;
use serde_json::json;

fn fixture(name: &str) -> String {
    let path = format!("{}/../../flows/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("fixture readable")
}

#[test]
fn parses_basic_flow() {
    let graph = parse_flow(&fixture("hello-service.json")).unwrap();
    assert_eq!(graph.flow_id, "t1");
    assert_eq!(graph.label, "hello-service");
    assert_eq!(graph.nodes.len(), 4);
    let http_in = graph.node("in").unwrap();
    assert_eq!(http_in.node_type, "http-in");
    assert_eq!(http_in.prop_str("method").as_deref(), Some("POST"));
    assert_eq!(http_in.wires, vec![vec!["greet".to_string()]]);
    assert!(graph.subflow_templates.is_empty());
}

#[test]
fn preserves_source_document() {
    let raw = fixture("chain.json");
    let graph = parse_flow(&raw).unwrap();
    assert_eq!(graph.raw_json, raw);
}

#[test]
fn rejects_non_array_document() {
    let err = parse_flow("{}").unwrap_err();
    assert!(matches!(err, FlowError::Parse(_)));
}

#[test]
fn rejects_entry_without_id() {
    let doc = json!([{ "type": "inject", "wires": [] }]).to_string();
    let err = parse_flow(&doc).unwrap_err();
    assert!(matches!(err, FlowError::Schema { field, .. } if field == "id"));
}

#[test]
fn rejects_node_without_wires() {
    let doc = json!([{ "id": "a", "type": "inject" }]).to_string();
    let err = parse_flow(&doc).unwrap_err();
    assert!(matches!(err, FlowError::Schema { field, .. } if field == "wires"));
}

#[test]
fn rejects_dangling_wire() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "a", "type": "inject", "z": "t1", "wires": [["ghost"]] }
    ])
    .to_string();
    let err = parse_flow(&doc).unwrap_err();
    assert!(matches!(err, FlowError::DanglingWire { from, to } if from == "a" && to == "ghost"));
}

#[test]
fn validate_reports_all_violation_kinds() {
    // duplicate id + missing mandatory prop + unknown type + unknown template
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "a", "type": "split", "z": "t1", "wires": [[]] },
        { "id": "a", "type": "debug", "z": "t1", "wires": [] },
        { "id": "b", "type": "mystery", "z": "t1", "wires": [] },
        { "id": "c", "type": "subflow:nope", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let violations = validate(&graph, &[]);
    assert!(violations.contains(&Violation::DuplicateId { id: "a".into() }));
    assert!(violations.contains(&Violation::MissingProp {
        node: "a".into(),
        prop: "splitSize".into()
    }));
    assert!(violations.contains(&Violation::UnknownType {
        node: "b".into(),
        node_type: "mystery".into()
    }));
    assert!(violations.contains(&Violation::UnknownTemplate {
        node: "c".into(),
        template: "nope".into()
    }));
}

#[test]
fn validate_accepts_registered_custom_types() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "b", "type": "mystery", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    assert!(!validate(&graph, &[]).is_empty());
    assert!(validate(&graph, &["mystery".to_string()]).is_empty());
}

#[test]
fn validate_reports_port_count_mismatch() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "a", "type": "inject", "z": "t1", "wires": [["b"], ["c"]] },
        { "id": "b", "type": "debug", "z": "t1", "wires": [] },
        { "id": "c", "type": "debug", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let violations = validate(&graph, &[]);
    assert!(violations.contains(&Violation::PortCountMismatch {
        node: "a".into(),
        declared: 1,
        actual: 2
    }));
}

#[test]
fn expands_shipped_splitjoin_template() {
    let graph = parse_flow(&fixture("splitjoin.json")).unwrap();
    // main flow: 3 plain nodes + 1 instance; template body: 4 nodes
    assert_eq!(graph.nodes.len(), 4);
    assert_eq!(graph.subflow_templates["sj"].body.len(), 4);

    let expanded = expand_subflows(&graph).unwrap();
    assert_eq!(expanded.nodes.len(), 3 + 4);
    assert!(!expanded.has_subflow_instances());
    assert!(validate(&expanded, &[]).is_empty());

    // instance env overrides the template default; the template default
    // fills what the instance leaves unset
    let split = expanded.node("use.chunk").unwrap();
    assert_eq!(split.prop_u64("splitSize"), Some(3));
    let invoke = expanded.node("use.work").unwrap();
    assert_eq!(invoke.prop_str("action").as_deref(), Some("increment"));

    // the instance's inbound and outbound wires are reattached to the ports
    let feed = expanded.node("feed").unwrap();
    assert_eq!(feed.wires, vec![vec!["use.prep".to_string()]]);
    let join = expanded.node("use.collect").unwrap();
    assert_eq!(join.wires, vec![vec!["wrap".to_string()]]);
}

#[test]
fn expansion_is_idempotent() {
    let graph = parse_flow(&fixture("splitjoin.json")).unwrap();
    let once = expand_subflows(&graph).unwrap();
    let twice = expand_subflows(&once).unwrap();
    assert_eq!(once.nodes.len(), twice.nodes.len());
    for (a, b) in once.nodes.iter().zip(&twice.nodes) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.wires, b.wires);
        assert_eq!(a.props, b.props);
    }
}

#[test]
fn expansion_without_instances_is_identity() {
    let graph = parse_flow(&fixture("chain.json")).unwrap();
    let expanded = expand_subflows(&graph).unwrap();
    assert_eq!(graph.nodes.len(), expanded.nodes.len());
    for (a, b) in graph.nodes.iter().zip(&expanded.nodes) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.wires, b.wires);
    }
}

#[test]
fn expansion_rejects_cyclic_templates() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "A", "type": "subflow", "in": [], "out": [] },
        { "id": "B", "type": "subflow", "in": [], "out": [] },
        { "id": "a1", "type": "subflow:B", "z": "A", "wires": [] },
        { "id": "b1", "type": "subflow:A", "z": "B", "wires": [] },
        { "id": "main", "type": "subflow:A", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let err = expand_subflows(&graph).unwrap_err();
    assert!(matches!(err, FlowError::CyclicTemplate(_)));
}

#[test]
fn expansion_rejects_unknown_template() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "main", "type": "subflow:ghost", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let err = expand_subflows(&graph).unwrap_err();
    assert!(matches!(err, FlowError::UnknownTemplate(t) if t == "ghost"));
}

#[test]
fn nested_templates_expand_fully() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "inner", "type": "subflow",
          "in": [{ "wires": [{ "id": "leaf" }] }],
          "out": [{ "wires": [{ "id": "leaf" }] }] },
        { "id": "leaf", "type": "function", "z": "inner", "wires": [[]] },
        { "id": "outer", "type": "subflow",
          "in": [{ "wires": [{ "id": "mid" }] }],
          "out": [{ "wires": [{ "id": "mid" }] }] },
        { "id": "mid", "type": "subflow:inner", "z": "outer", "wires": [[]] },
        { "id": "feed", "type": "inject", "z": "t1", "wires": [["use"]] },
        { "id": "use", "type": "subflow:outer", "z": "t1", "wires": [["log"]] },
        { "id": "log", "type": "debug", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let expanded = expand_subflows(&graph).unwrap();
    assert!(!expanded.has_subflow_instances());
    assert!(expanded.node("use.mid.leaf").is_some());
    assert_eq!(
        expanded.node("feed").unwrap().wires,
        vec![vec!["use.mid.leaf".to_string()]]
    );
}

#[test]
fn chain_analysis_accepts_linear_flow() {
    let graph = parse_flow(&fixture("chain.json")).unwrap();
    let report = analyze_chain(&graph);
    assert!(report.is_chain);
    assert_eq!(report.ordered_node_ids, ["feed", "s1", "s2", "s3", "log"]);
}

#[test]
fn chain_analysis_rejects_expanded_forkjoin() {
    // the fork-join pattern is not linear: the split fans work out
    let graph = parse_flow(&fixture("splitjoin.json")).unwrap();
    let expanded = expand_subflows(&graph).unwrap();
    let report = analyze_chain(&expanded);
    assert!(report.is_chain, "expanded demo is structurally linear");

    // introduce a real fan-out and it stops being a chain
    let mut forked = expanded.clone();
    let n = forked.nodes.iter_mut().find(|n| n.id == "use.chunk").unwrap();
    n.wires[0].push("wrap".into());
    let report = analyze_chain(&forked);
    assert!(!report.is_chain);
    assert!(report.violation.unwrap().contains("fans out"));
}

#[test]
fn chain_analysis_ignores_annotation_nodes() {
    let graph = parse_flow(&fixture("hello-service.json")).unwrap();
    let report = analyze_chain(&graph);
    assert!(report.is_chain);
    assert_eq!(report.ordered_node_ids, ["in", "greet", "out"]);
}

#[test]
fn chain_analysis_rejects_two_sources() {
    let doc = json!([
        { "id": "t1", "type": "tab", "label": "x" },
        { "id": "a", "type": "inject", "z": "t1", "wires": [["c"]] },
        { "id": "b", "type": "inject", "z": "t1", "wires": [[]] },
        { "id": "c", "type": "debug", "z": "t1", "wires": [] }
    ])
    .to_string();
    let graph = parse_flow(&doc).unwrap();
    let report = analyze_chain(&graph);
    assert!(!report.is_chain);
    assert!(report.violation.unwrap().contains("source"));
}

/// Build a linear chain document of `len` function nodes.
fn linear_doc(len: usize) -> String {
    let mut entries = vec![json!({ "id": "t1", "type": "tab", "label": "gen" })];
    for i in 0..len {
        let wires = if i + 1 < len {
            json!([[format!("n{}", i + 1)]])
        } else {
            json!([[]])
        };
        entries.push(json!({
            "id": format!("n{i}"),
            "type": "function",
            "z": "t1",
            "wires": wires
        }));
    }
    serde_json::to_string(&entries).unwrap()
}

proptest! {
    #[test]
    fn generated_linear_flows_are_chains(len in 1usize..40) {
        let graph = parse_flow(&linear_doc(len)).unwrap();
        let report = analyze_chain(&graph);
        prop_assert!(report.is_chain);
        prop_assert_eq!(report.ordered_node_ids.len(), len);
    }

    #[test]
    fn extra_edge_breaks_the_chain(len in 3usize..40, from in 0usize..40, to in 0usize..40) {
        let from = from % len;
        let to = to % len;
        // skip edges that keep the graph linear
        prop_assume!(to != from + 1);
        let mut graph = parse_flow(&linear_doc(len)).unwrap();
        let from_id = format!("n{from}");
        let to_id = format!("n{to}");
        let node = graph.nodes.iter_mut().find(|n| n.id == from_id).unwrap();
        node.wires[0].push(to_id);
        let report = analyze_chain(&graph);
        prop_assert!(!report.is_chain);
    }

    #[test]
    fn expansion_never_leaves_instances(split_size in 1u64..20, payload_len in 0usize..30) {
        let mut doc: serde_json::Value = serde_json::from_str(&fixture("splitjoin.json")).unwrap();
        // vary the instance env and payload; expansion must stay total
        for entry in doc.as_array_mut().unwrap() {
            if entry["id"] == "use" {
                entry["env"] = json!([{ "name": "SPLIT_SIZE", "value": split_size.to_string() }]);
            }
            if entry["id"] == "feed" {
                entry["payload"] = json!(vec![1; payload_len]);
            }
        }
        let graph = parse_flow(&doc.to_string()).unwrap();
        let expanded = expand_subflows(&graph).unwrap();
        prop_assert!(!expanded.has_subflow_instances());
        prop_assert!(validate(&expanded, &[]).is_empty());
        prop_assert_eq!(expanded.node("use.chunk").unwrap().prop_u64("splitSize"), Some(split_size));
    }
}
