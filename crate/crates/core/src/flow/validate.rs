use std::collections::BTreeSet;

use super::{declared_output_ports, mandatory_props, FlowGraph, BUILTIN_NODE_TYPES};

/// One invariant violation found by [`validate`]. Violations are data, not
/// errors: an empty list means the graph is deployable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateId { id: String },
    DanglingWire { from: String, to: String },
    MissingProp { node: String, prop: String },
    UnknownTemplate { node: String, template: String },
    UnknownType { node: String, node_type: String },
    PortCountMismatch { node: String, declared: usize, actual: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateId { id } => write!(f, "duplicate node id `{id}`"),
            Violation::DanglingWire { from, to } => {
                write!(f, "wire from `{from}` references unknown node `{to}`")
            }
            Violation::MissingProp { node, prop } => {
                write!(f, "node `{node}` missing mandatory prop `{prop}`")
            }
            Violation::UnknownTemplate { node, template } => {
                write!(f, "node `{node}` references unknown subflow template `{template}`")
            }
            Violation::UnknownType { node, node_type } => {
                write!(f, "node `{node}` has unknown type `{node_type}`")
            }
            Violation::PortCountMismatch { node, declared, actual } => write!(
                f,
                "node `{node}` declares {declared} output port(s) but wires {actual}"
            ),
        }
    }
}

/// Collect all invariant violations: duplicate ids, dangling wires, missing
/// mandatory props, unknown subflow templates, unknown node types.
///
/// `extra_known_types` lists node types with registered handlers; built-in
/// types are always known.
pub fn validate(graph: &FlowGraph, extra_known_types: &[String]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let ids: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();

    for node in &graph.nodes {
        if !seen.insert(node.id.as_str()) {
            violations.push(Violation::DuplicateId { id: node.id.clone() });
        }
        for target in node.all_targets() {
            if !ids.contains(target.as_str()) {
                violations.push(Violation::DanglingWire {
                    from: node.id.clone(),
                    to: target.clone(),
                });
            }
        }
        if let Some(template_id) = node.subflow_template_id() {
            if !graph.subflow_templates.contains_key(template_id) {
                violations.push(Violation::UnknownTemplate {
                    node: node.id.clone(),
                    template: template_id.to_string(),
                });
            }
            continue;
        }
        let known = BUILTIN_NODE_TYPES.contains(&node.node_type.as_str())
            || extra_known_types.iter().any(|t| *t == node.node_type);
        if !known {
            violations.push(Violation::UnknownType {
                node: node.id.clone(),
                node_type: node.node_type.clone(),
            });
            continue;
        }
        for prop in mandatory_props(&node.node_type) {
            if !node.props.contains_key(*prop) {
                violations.push(Violation::MissingProp {
                    node: node.id.clone(),
                    prop: (*prop).to_string(),
                });
            }
        }
        if let Some(declared) = declared_output_ports(&node.node_type) {
            // trailing empty ports in the export are tolerated
            let actual = node.wires.len();
            let populated = node.wires.iter().filter(|p| !p.is_empty()).count();
            if actual > declared && populated > declared {
                violations.push(Violation::PortCountMismatch {
                    node: node.id.clone(),
                    declared,
                    actual,
                });
            }
        }
    }
    violations
}
