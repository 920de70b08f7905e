//! Compilation of linear flows into the platform's native sequence spec and
//! into a portable steps-style workflow YAML.

use serde_json::{json, Value};
use thiserror::Error;

use crate::adapter::{ActionClient, AdapterError};
use crate::annotations::AnnotationTriple;
use crate::flow::{analyze_chain, FlowGraph};

/// An ordered chain of fully-qualified action names, ready for platform
/// registration as a native sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSpec {
    pub name: String,
    pub components: Vec<String>,
    pub annotations: Vec<AnnotationTriple>,
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("flow is not a chain: {0}")]
    NotAChain(String),
    #[error("node `{node}` of type `{node_type}` has no action equivalent")]
    UncompilableNode { node: String, node_type: String },
    #[error("chain is empty after stripping side-effect nodes")]
    EmptyChain,
}

/// Options for [`compile_sequence`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CompileOptions {
    /// Drop debug/inject/http boundary nodes from the chain instead of
    /// rejecting them.
    pub strip_side_effects: bool,
}

fn is_side_effect(node_type: &str) -> bool {
    matches!(node_type, "debug" | "inject" | "http-in" | "http-response")
}

/// Compile an expanded graph whose executable nodes form a chain of
/// action-invoke (or strippable side-effect) nodes into a [`SequenceSpec`].
/// Annotation triples are carried through unchanged.
pub fn compile_sequence(
    graph: &FlowGraph,
    name: &str,
    triples: &[AnnotationTriple],
    options: CompileOptions,
) -> Result<SequenceSpec, CompileError> {
    let report = analyze_chain(graph);
    if !report.is_chain {
        return Err(CompileError::NotAChain(
            report.violation.unwrap_or_else(|| "unknown violation".into()),
        ));
    }

    let mut components = Vec::new();
    for id in &report.ordered_node_ids {
        let node = graph.node(id).expect("chain node exists");
        match node.node_type.as_str() {
            "action-invoke" => {
                let action = node
                    .prop_str("action")
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| CompileError::UncompilableNode {
                        node: id.clone(),
                        node_type: node.node_type.clone(),
                    })?;
                components.push(action);
            }
            t if is_side_effect(t) && options.strip_side_effects => {}
            t => {
                // function nodes compile only when previously emitted as
                // standalone actions, signalled by an `actionName` prop
                if t == "function" {
                    if let Some(action) = node.prop_str("actionName") {
                        components.push(action);
                        continue;
                    }
                }
                return Err(CompileError::UncompilableNode {
                    node: id.clone(),
                    node_type: node.node_type.clone(),
                });
            }
        }
    }
    if components.is_empty() {
        return Err(CompileError::EmptyChain);
    }

    Ok(SequenceSpec {
        name: name.to_string(),
        components,
        annotations: triples.to_vec(),
    })
}

/// Emit the portable steps YAML: step i calls component i with the previous
/// step's result as args; step 1 takes the workflow input. Formatting is
/// deterministic.
pub fn emit_portable(spec: &SequenceSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("workflow: {}\n", spec.name));
    out.push_str("steps:\n");
    for (i, component) in spec.components.iter().enumerate() {
        let step = i + 1;
        let args = if i == 0 {
            "${input}".to_string()
        } else {
            format!("${{step{}.result}}", i)
        };
        out.push_str(&format!("  - step{step}:\n"));
        out.push_str(&format!("      call: {component}\n"));
        out.push_str(&format!("      args: {args}\n"));
        out.push_str(&format!("      result: step{step}\n"));
    }
    out.push_str(&format!("return: ${{step{}.result}}\n", spec.components.len()));
    out
}

/// Register the sequence on the target platform as a native sequence
/// action; idempotent upsert. The platform rejects unknown components.
pub async fn register_sequence(
    client: &ActionClient,
    spec: &SequenceSpec,
) -> Result<Value, AdapterError> {
    let annotations: serde_json::Map<String, Value> = spec
        .annotations
        .iter()
        .map(|t| (t.predicate.clone(), json!(t.object)))
        .collect();
    let descriptor = json!({
        "name": spec.name,
        "kind": "sequence",
        "components": spec.components,
        "annotations": annotations,
    });
    client.register(&descriptor).await
}
