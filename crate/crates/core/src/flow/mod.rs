//! Node-RED-compatible flow model: parsing, validation, subflow expansion
//! and chain-shape analysis.
//!
//! The accepted input is the flat-array editor export format: `tab` entries
//! name flows, `subflow` entries define reusable templates, everything else
//! is a node. Grouped/newer export formats are not handled.

mod chain;
mod expand;
mod parse;
mod validate;

pub use chain::{analyze_chain, ChainReport};
pub use expand::expand_subflows;
pub use parse::parse_flow;
pub use validate::{validate, Violation};

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

/// A parsed flow specification: nodes, wires and subflow templates, with the
/// raw source document preserved for byte-identical re-serialization.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    pub flow_id: String,
    pub label: String,
    pub nodes: Vec<NodeSpec>,
    pub subflow_templates: BTreeMap<String, SubflowTemplate>,
    /// The source document exactly as given to `parse_flow`.
    pub raw_json: String,
}

/// One node of a flow. `wires` holds one entry per output port, each a list
/// of downstream node ids.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub id: String,
    pub node_type: String,
    pub name: String,
    pub props: BTreeMap<String, Value>,
    pub wires: Vec<Vec<String>>,
}

impl NodeSpec {
    pub fn is_subflow_instance(&self) -> bool {
        self.node_type.starts_with("subflow:")
    }

    pub fn subflow_template_id(&self) -> Option<&str> {
        self.node_type.strip_prefix("subflow:")
    }

    /// String prop lookup, tolerating numeric/bool JSON values.
    pub fn prop_str(&self, key: &str) -> Option<String> {
        match self.props.get(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            Some(Value::Bool(b)) => Some(b.to_string()),
            _ => None,
        }
    }

    pub fn prop_u64(&self, key: &str) -> Option<u64> {
        match self.props.get(key) {
            Some(Value::Number(n)) => n.as_u64(),
            Some(Value::String(s)) => s.parse().ok(),
            _ => None,
        }
    }

    /// All downstream ids across every output port.
    pub fn all_targets(&self) -> impl Iterator<Item = &String> {
        self.wires.iter().flatten()
    }
}

/// A reusable flow fragment packaged as a single node, with entry/exit ports
/// and environment variables substituted into the body on expansion.
#[derive(Debug, Clone)]
pub struct SubflowTemplate {
    pub template_id: String,
    pub name: String,
    pub in_ports: Vec<String>,
    pub out_ports: Vec<String>,
    pub env_vars: Vec<(String, String)>,
    pub body: Vec<NodeSpec>,
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("schema error at node {index}: missing or invalid field `{field}`{detail}")]
    Schema {
        index: usize,
        field: String,
        detail: String,
    },
    #[error("schema error: wire from `{from}` references unknown node `{to}`")]
    DanglingWire { from: String, to: String },
    #[error("cyclic subflow template reference through `{0}`")]
    CyclicTemplate(String),
    #[error("unknown subflow template `{0}`")]
    UnknownTemplate(String),
}

impl FlowGraph {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn has_subflow_instances(&self) -> bool {
        self.nodes.iter().any(|n| n.is_subflow_instance())
    }
}

/// Node types with runtime executors built in. Everything else needs a
/// registered handler or fails validation with UnknownType.
pub const BUILTIN_NODE_TYPES: &[&str] = &[
    "inject",
    "function",
    "split",
    "join",
    "debug",
    "action-invoke",
    "http-in",
    "http-response",
    "annotation",
];

/// Output-port count a node type declares; None means "as wired".
pub fn declared_output_ports(node_type: &str) -> Option<usize> {
    match node_type {
        "debug" | "http-response" | "annotation" => Some(0),
        "inject" | "function" | "split" | "join" | "action-invoke" | "http-in" => Some(1),
        _ => None,
    }
}

/// Mandatory props per built-in node type, enforced by `validate`.
pub fn mandatory_props(node_type: &str) -> &'static [&'static str] {
    match node_type {
        "split" => &["splitSize"],
        "http-in" => &["method", "path"],
        "action-invoke" => &["action"],
        _ => &[],
    }
}
