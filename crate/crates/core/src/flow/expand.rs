use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{FlowError, FlowGraph, NodeSpec, SubflowTemplate};

/// Replace every `subflow:<id>` instance with a fresh copy of the template
/// body. Body node ids are uniquified as `<instanceId>.<templateNodeId>`,
/// the instance's incoming and outgoing wires are reattached to the
/// template's in/out ports, and `${NAME}` placeholders in string props are
/// substituted from the instance's env values (falling back to template
/// defaults).
///
/// Idempotent: a graph without instances is returned unchanged.
pub fn expand_subflows(graph: &FlowGraph) -> Result<FlowGraph, FlowError> {
    check_cycles(graph)?;

    let mut out = graph.clone();
    while out.has_subflow_instances() {
        out = expand_once(&out)?;
    }
    Ok(out)
}

fn check_cycles(graph: &FlowGraph) -> Result<(), FlowError> {
    // template -> templates referenced from its body
    let refs: BTreeMap<&str, BTreeSet<&str>> = graph
        .subflow_templates
        .iter()
        .map(|(id, t)| {
            let targets = t
                .body
                .iter()
                .filter_map(|n| n.subflow_template_id())
                .collect();
            (id.as_str(), targets)
        })
        .collect();

    fn visit<'a>(
        id: &'a str,
        refs: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        stack: &mut Vec<&'a str>,
        done: &mut BTreeSet<&'a str>,
    ) -> Result<(), FlowError> {
        if done.contains(id) {
            return Ok(());
        }
        if stack.contains(&id) {
            return Err(FlowError::CyclicTemplate(id.to_string()));
        }
        stack.push(id);
        for next in refs.get(id).into_iter().flatten() {
            visit(next, refs, stack, done)?;
        }
        stack.pop();
        done.insert(id);
        Ok(())
    }

    let mut done = BTreeSet::new();
    for id in refs.keys() {
        visit(id, &refs, &mut Vec::new(), &mut done)?;
    }
    Ok(())
}

fn expand_once(graph: &FlowGraph) -> Result<FlowGraph, FlowError> {
    let mut nodes: Vec<NodeSpec> = Vec::new();
    // instance id -> prefixed in-port node ids
    let mut in_rewrites: BTreeMap<String, Vec<String>> = BTreeMap::new();

    for node in &graph.nodes {
        let Some(template_id) = node.subflow_template_id() else {
            nodes.push(node.clone());
            continue;
        };
        let template = graph
            .subflow_templates
            .get(template_id)
            .ok_or_else(|| FlowError::UnknownTemplate(template_id.to_string()))?;

        let env = resolve_env(node, template);
        in_rewrites.insert(
            node.id.clone(),
            template
                .in_ports
                .iter()
                .map(|p| format!("{}.{}", node.id, p))
                .collect(),
        );

        for body_node in &template.body {
            let mut copy = body_node.clone();
            copy.id = format!("{}.{}", node.id, body_node.id);
            copy.wires = body_node
                .wires
                .iter()
                .map(|port| port.iter().map(|t| format!("{}.{}", node.id, t)).collect())
                .collect();
            for value in copy.props.values_mut() {
                substitute(value, &env);
            }
            // exit nodes inherit the instance's downstream wires
            for (port_index, exit_id) in template.out_ports.iter().enumerate() {
                if exit_id == &body_node.id {
                    let extra = node.wires.get(port_index).cloned().unwrap_or_default();
                    if copy.wires.is_empty() {
                        copy.wires.push(extra);
                    } else {
                        copy.wires[0].extend(extra);
                    }
                }
            }
            nodes.push(copy);
        }
    }

    // redirect wires that targeted an instance to its in-port nodes
    for node in &mut nodes {
        for port in &mut node.wires {
            let mut rewired = Vec::with_capacity(port.len());
            for target in port.drain(..) {
                match in_rewrites.get(&target) {
                    Some(entries) => rewired.extend(entries.iter().cloned()),
                    None => rewired.push(target),
                }
            }
            *port = rewired;
        }
    }

    Ok(FlowGraph {
        flow_id: graph.flow_id.clone(),
        label: graph.label.clone(),
        nodes,
        subflow_templates: graph.subflow_templates.clone(),
        raw_json: graph.raw_json.clone(),
    })
}

fn resolve_env(instance: &NodeSpec, template: &SubflowTemplate) -> BTreeMap<String, String> {
    let mut env: BTreeMap<String, String> = template.env_vars.iter().cloned().collect();
    // instance-level overrides: either an `env` array (editor export style)
    // or a direct prop with the variable's name
    if let Some(Value::Array(entries)) = instance.props.get("env") {
        for e in entries {
            if let (Some(name), Some(value)) = (
                e.get("name").and_then(Value::as_str),
                e.get("value"),
            ) {
                let value = match value {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                env.insert(name.to_string(), value);
            }
        }
    }
    for name in template.env_vars.iter().map(|(n, _)| n) {
        if let Some(v) = instance.prop_str(name) {
            env.insert(name.clone(), v);
        }
    }
    env
}

fn substitute(value: &mut Value, env: &BTreeMap<String, String>) {
    match value {
        Value::String(s) => {
            if s.contains("${") {
                let mut out = s.clone();
                for (name, val) in env {
                    out = out.replace(&format!("${{{name}}}"), val);
                }
                *s = out;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| substitute(v, env)),
        Value::Object(map) => map.values_mut().for_each(|v| substitute(v, env)),
        _ => {}
    }
}
