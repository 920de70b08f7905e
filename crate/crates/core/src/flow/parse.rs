use std::collections::BTreeMap;

use serde_json::Value;

use super::{FlowError, FlowGraph, NodeSpec, SubflowTemplate};

/// Parse a Node-RED editor export (flat JSON array) into a [`FlowGraph`].
///
/// `tab` entries name the flow, `subflow` entries define templates, every
/// other entry is a node. Unknown node types are retained verbatim; source
/// order is preserved. The raw document is kept for byte-identical
/// round-tripping.
pub fn parse_flow(document: &str) -> Result<FlowGraph, FlowError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| FlowError::Parse(e.to_string()))?;
    let entries = value
        .as_array()
        .ok_or_else(|| FlowError::Parse("top-level value must be an array".into()))?;

    let mut flow_id = String::from("flow");
    let mut label = String::new();
    let mut nodes = Vec::new();
    let mut templates = BTreeMap::new();
    // subflow body nodes carry a `z` field referencing their template id
    let mut template_bodies: BTreeMap<String, Vec<NodeSpec>> = BTreeMap::new();
    let mut tab_ids: Vec<String> = Vec::new();

    for (index, entry) in entries.iter().enumerate() {
        let obj = entry.as_object().ok_or_else(|| FlowError::Schema {
            index,
            field: "(entry)".into(),
            detail: ": not a JSON object".into(),
        })?;
        let entry_type = obj.get("type").and_then(Value::as_str).ok_or_else(|| {
            FlowError::Schema {
                index,
                field: "type".into(),
                detail: String::new(),
            }
        })?;
        let id = obj
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| FlowError::Schema {
                index,
                field: "id".into(),
                detail: String::new(),
            })?
            .to_string();

        match entry_type {
            "tab" => {
                flow_id = id.clone();
                tab_ids.push(id);
                if let Some(l) = obj.get("label").and_then(Value::as_str) {
                    label = l.to_string();
                }
            }
            "subflow" => {
                let template = parse_subflow_header(index, &id, obj)?;
                templates.insert(id, template);
            }
            _ => {
                let node = parse_node(index, &id, entry_type, obj)?;
                if let Some(z) = obj.get("z").and_then(Value::as_str) {
                    if !tab_ids.contains(&z.to_string()) && !z.is_empty() {
                        // candidate subflow body node; resolved below
                        template_bodies.entry(z.to_string()).or_default().push(node);
                        continue;
                    }
                }
                nodes.push(node);
            }
        }
    }

    // Attach bodies to their templates; bodies referencing no known template
    // belong to the main flow (e.g. a `z` pointing at an unexported tab).
    for (z, body) in template_bodies {
        if let Some(t) = templates.get_mut(&z) {
            t.body = body;
        } else {
            nodes.extend(body);
        }
    }

    // Wire targets must resolve within their own scope (main graph or
    // template body).
    check_wires(&nodes)?;
    for t in templates.values() {
        check_wires(&t.body)?;
    }

    Ok(FlowGraph {
        flow_id,
        label,
        nodes,
        subflow_templates: templates,
        raw_json: document.to_string(),
    })
}

fn check_wires(nodes: &[NodeSpec]) -> Result<(), FlowError> {
    let ids: std::collections::BTreeSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    for node in nodes {
        for target in node.all_targets() {
            if !ids.contains(target.as_str()) {
                return Err(FlowError::DanglingWire {
                    from: node.id.clone(),
                    to: target.clone(),
                });
            }
        }
    }
    Ok(())
}

fn parse_node(
    index: usize,
    id: &str,
    entry_type: &str,
    obj: &serde_json::Map<String, Value>,
) -> Result<NodeSpec, FlowError> {
    let wires = match obj.get("wires") {
        Some(Value::Array(ports)) => {
            let mut parsed = Vec::with_capacity(ports.len());
            for port in ports {
                let targets = port.as_array().ok_or_else(|| FlowError::Schema {
                    index,
                    field: "wires".into(),
                    detail: ": port entry is not an array".into(),
                })?;
                let ids = targets
                    .iter()
                    .map(|t| {
                        t.as_str().map(str::to_string).ok_or_else(|| FlowError::Schema {
                            index,
                            field: "wires".into(),
                            detail: ": wire target is not a string".into(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                parsed.push(ids);
            }
            parsed
        }
        Some(_) => {
            return Err(FlowError::Schema {
                index,
                field: "wires".into(),
                detail: ": not an array".into(),
            })
        }
        None => {
            return Err(FlowError::Schema {
                index,
                field: "wires".into(),
                detail: String::new(),
            })
        }
    };

    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let mut props = BTreeMap::new();
    for (k, v) in obj {
        if !matches!(k.as_str(), "id" | "type" | "name" | "wires" | "z" | "x" | "y") {
            props.insert(k.clone(), v.clone());
        }
    }

    Ok(NodeSpec {
        id: id.to_string(),
        node_type: entry_type.to_string(),
        name,
        props,
        wires,
    })
}

fn parse_subflow_header(
    index: usize,
    id: &str,
    obj: &serde_json::Map<String, Value>,
) -> Result<SubflowTemplate, FlowError> {
    let port_ids = |key: &str| -> Result<Vec<String>, FlowError> {
        let mut out = Vec::new();
        if let Some(ports) = obj.get(key).and_then(Value::as_array) {
            for port in ports {
                let wires = port
                    .get("wires")
                    .and_then(Value::as_array)
                    .ok_or_else(|| FlowError::Schema {
                        index,
                        field: key.to_string(),
                        detail: ": port missing wires".into(),
                    })?;
                for w in wires {
                    if let Some(target) = w.get("id").and_then(Value::as_str) {
                        out.push(target.to_string());
                    }
                }
            }
        }
        Ok(out)
    };

    let mut env_vars = Vec::new();
    if let Some(env) = obj.get("env").and_then(Value::as_array) {
        for e in env {
            let name = e.get("name").and_then(Value::as_str).unwrap_or("");
            let default = match e.get("value") {
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            };
            if !name.is_empty() {
                env_vars.push((name.to_string(), default));
            }
        }
    }

    Ok(SubflowTemplate {
        template_id: id.to_string(),
        name: obj
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string(),
        in_ports: port_ids("in")?,
        out_ports: port_ids("out")?,
        env_vars,
        body: Vec::new(),
    })
}
