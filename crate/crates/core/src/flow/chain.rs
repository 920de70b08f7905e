use std::collections::BTreeMap;

use super::FlowGraph;

/// Result of linear-path analysis: `is_chain` is true iff the executable
/// nodes form a single chain (one source, one sink, no fan-in or fan-out).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainReport {
    pub is_chain: bool,
    pub ordered_node_ids: Vec<String>,
    pub violation: Option<String>,
}

impl ChainReport {
    fn not_a_chain(violation: String) -> Self {
        ChainReport {
            is_chain: false,
            ordered_node_ids: Vec::new(),
            violation: Some(violation),
        }
    }
}

/// Determine whether the executable nodes of an expanded graph form a single
/// linear path. Annotation nodes are inert and excluded from the analysis.
pub fn analyze_chain(graph: &FlowGraph) -> ChainReport {
    let executable: Vec<_> = graph
        .nodes
        .iter()
        .filter(|n| n.node_type != "annotation")
        .collect();
    if executable.is_empty() {
        return ChainReport::not_a_chain("graph has no executable nodes".into());
    }

    let mut incoming: BTreeMap<&str, usize> = executable.iter().map(|n| (n.id.as_str(), 0)).collect();
    let mut next: BTreeMap<&str, &str> = BTreeMap::new();

    for node in &executable {
        let targets: Vec<&String> = node
            .all_targets()
            .filter(|t| incoming.contains_key(t.as_str()))
            .collect();
        if targets.len() > 1 {
            return ChainReport::not_a_chain(format!(
                "node `{}` fans out to {} targets",
                node.id,
                targets.len()
            ));
        }
        if let Some(target) = targets.first() {
            *incoming.get_mut(target.as_str()).unwrap() += 1;
            next.insert(node.id.as_str(), target.as_str());
        }
    }

    for (id, count) in &incoming {
        if *count > 1 {
            return ChainReport::not_a_chain(format!("node `{id}` has {count} incoming wires"));
        }
    }

    let sources: Vec<&str> = executable
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| incoming[id] == 0)
        .collect();
    if sources.len() != 1 {
        return ChainReport::not_a_chain(format!(
            "expected exactly one source node, found {}",
            sources.len()
        ));
    }

    let mut order = vec![sources[0].to_string()];
    let mut cursor = sources[0];
    while let Some(target) = next.get(cursor) {
        order.push(target.to_string());
        cursor = target;
    }
    if order.len() != executable.len() {
        // disconnected component or cycle not reachable from the source
        return ChainReport::not_a_chain(format!(
            "chain from source covers {} of {} executable nodes",
            order.len(),
            executable.len()
        ));
    }

    ChainReport {
        is_chain: true,
        ordered_node_ids: order,
        violation: None,
    }
}
