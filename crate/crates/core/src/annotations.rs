//! Deployment annotations: `//@key=value` markers inside function-node code
//! and dedicated annotation nodes, extracted to triples and embedded as a
//! manifest block in the flow document.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::flow::FlowGraph;

pub const MANIFEST_ID: &str = "flowfaas.annotations";
pub const MANIFEST_TYPE: &str = "annotation-manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Provenance {
    InCode,
    AnnotationNode,
}

/// A (subject, predicate, object) deployment hint. Subject is a flow or
/// node id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnnotationTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub provenance: Provenance,
}

/// Predicates with schema-validated objects. Unknown predicates pass
/// through untouched; the vocabulary is open.
pub const CURATED_PREDICATES: &[&str] = &[
    "executorMode",
    "locality",
    "imageImport",
    "billingExempt",
    "memoryMB",
    "timeoutMs",
];

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation node `{node}` scope targets unknown node `{target}`")]
    UnknownScopeTarget { node: String, target: String },
    #[error("invalid object `{object}` for predicate `{predicate}`: {reason}")]
    InvalidObject {
        predicate: String,
        object: String,
        reason: String,
    },
}

/// A non-fatal extraction problem, collected rather than raised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationWarning {
    pub subject: String,
    pub detail: String,
}

fn predicate_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_-]*$").unwrap())
}

fn incode_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*//@([A-Za-z][A-Za-z0-9_-]*)=(\S+)\s*$").unwrap())
}

/// Extract `//@key=value` lines from a function node's code body. Lines
/// starting `//@` that fail the grammar are collected as warnings; other
/// non-matching lines are ignored.
pub fn extract_incode(
    subject: &str,
    text: &str,
) -> (Vec<AnnotationTriple>, Vec<AnnotationWarning>) {
    let mut triples = Vec::new();
    let mut warnings = Vec::new();
    for line in text.lines() {
        if let Some(caps) = incode_re().captures(line) {
            triples.push(AnnotationTriple {
                subject: subject.to_string(),
                predicate: caps[1].to_string(),
                object: caps[2].to_string(),
                provenance: Provenance::InCode,
            });
        } else if line.trim_start().starts_with("//@") {
            warnings.push(AnnotationWarning {
                subject: subject.to_string(),
                detail: format!("malformed annotation line: {}", line.trim()),
            });
        }
    }
    (triples, warnings)
}

/// One triple per (key, value) prop pair of every annotation node. Subject
/// resolution: scope "flow" (the default) attaches to the flow id, an
/// explicit scope names a target node id. Also scans function-node code
/// props for in-code markers.
pub fn extract_node_annotations(
    graph: &FlowGraph,
) -> Result<(Vec<AnnotationTriple>, Vec<AnnotationWarning>), AnnotationError> {
    let mut triples = Vec::new();
    let mut warnings = Vec::new();

    for node in &graph.nodes {
        if node.node_type == "annotation" {
            let scope = node.prop_str("scope").unwrap_or_else(|| "flow".into());
            let subject = if scope == "flow" {
                graph.flow_id.clone()
            } else {
                if graph.node(&scope).is_none() {
                    return Err(AnnotationError::UnknownScopeTarget {
                        node: node.id.clone(),
                        target: scope,
                    });
                }
                scope
            };
            let mut produced = 0;
            for (key, value) in &node.props {
                if key == "scope" {
                    continue;
                }
                if !predicate_re().is_match(key) {
                    warnings.push(AnnotationWarning {
                        subject: subject.clone(),
                        detail: format!("invalid predicate `{key}` on node `{}`", node.id),
                    });
                    continue;
                }
                let object = match value {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                validate_curated(key, &object)?;
                triples.push(AnnotationTriple {
                    subject: subject.clone(),
                    predicate: key.clone(),
                    object,
                    provenance: Provenance::AnnotationNode,
                });
                produced += 1;
            }
            if produced == 0 {
                warnings.push(AnnotationWarning {
                    subject,
                    detail: format!("annotation node `{}` carries no key/value props", node.id),
                });
            }
        } else if node.node_type == "function" {
            if let Some(code) = node.prop_str("func").or_else(|| node.prop_str("code")) {
                let (t, w) = extract_incode(&node.id, &code);
                triples.extend(t);
                warnings.extend(w);
            }
        }
    }
    Ok((triples, warnings))
}

fn validate_curated(predicate: &str, object: &str) -> Result<(), AnnotationError> {
    let invalid = |reason: &str| AnnotationError::InvalidObject {
        predicate: predicate.to_string(),
        object: object.to_string(),
        reason: reason.to_string(),
    };
    match predicate {
        "executorMode" => {
            if !matches!(object, "service" | "function" | "flow-function") {
                return Err(invalid("expected service|function|flow-function"));
            }
        }
        "billingExempt" => {
            if object.parse::<bool>().is_err() {
                return Err(invalid("expected true|false"));
            }
        }
        "memoryMB" | "timeoutMs" => {
            if object.parse::<u64>().is_err() {
                return Err(invalid("expected a nonnegative integer"));
            }
        }
        _ => {}
    }
    Ok(())
}

/// The original graph plus its triples and the embedded document.
#[derive(Debug, Clone)]
pub struct AnnotatedGraph {
    pub graph: FlowGraph,
    pub triples: Vec<AnnotationTriple>,
    pub embedded: String,
}

/// Append a single manifest object holding all triples to the flow array.
/// Triple order is deterministic: subject, then predicate, then source
/// order. Stripping the block restores the original document byte-exactly.
pub fn embed(graph: &FlowGraph, triples: &[AnnotationTriple]) -> AnnotatedGraph {
    let mut ordered: Vec<(usize, &AnnotationTriple)> = triples.iter().enumerate().collect();
    ordered.sort_by(|(ia, a), (ib, b)| {
        (&a.subject, &a.predicate, ia).cmp(&(&b.subject, &b.predicate, ib))
    });

    let entries: Vec<Value> = ordered
        .iter()
        .map(|(_, t)| serde_json::to_value(t).unwrap())
        .collect();
    let manifest = serde_json::json!({
        "id": MANIFEST_ID,
        "type": MANIFEST_TYPE,
        "@graph": entries,
    });

    // splice the manifest into the raw document textually so the original
    // bytes (including any trailing whitespace) survive a later strip
    let raw = graph.raw_json.as_str();
    let embedded = match raw.rfind(']') {
        Some(close) => {
            let prefix = &raw[..close];
            let suffix = &raw[close..];
            let sep = if prefix.trim_end().ends_with('[') { "" } else { "," };
            format!("{prefix}{sep}{manifest}{suffix}")
        }
        None => raw.to_string(),
    };

    AnnotatedGraph {
        graph: graph.clone(),
        triples: ordered.into_iter().map(|(_, t)| t.clone()).collect(),
        embedded,
    }
}

/// Remove the embedded manifest, returning the original document and the
/// triples it carried. Inverse of [`embed`].
pub fn strip(embedded: &str) -> Option<(String, Vec<AnnotationTriple>)> {
    // the manifest is the last object before the closing bracket; its keys
    // serialize sorted, so it always begins with "@graph"
    let manifest_start = embedded.rfind("{\"@graph\":")?;
    let idx = if embedded[..manifest_start].ends_with(',') {
        manifest_start - 1
    } else {
        manifest_start
    };
    let close = embedded.rfind(']')?;
    let manifest_str = &embedded[manifest_start..close];
    let manifest: Value = serde_json::from_str(manifest_str).ok()?;
    if manifest.get("id")?.as_str()? != MANIFEST_ID {
        return None;
    }
    let triples = manifest
        .get("@graph")?
        .as_array()?
        .iter()
        .map(|v| serde_json::from_value(v.clone()))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;

    let original = format!("{}{}", &embedded[..idx], &embedded[close..]);
    Some((original, triples))
}
