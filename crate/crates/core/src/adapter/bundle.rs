use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotations::AnnotatedGraph;

use super::AdapterError;

/// Manifest of an emitted deployment bundle. Byte-deterministic for
/// identical inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub name: String,
    #[serde(rename = "executorMode")]
    pub executor_mode: String,
    #[serde(rename = "entryNodeId")]
    pub entry_node_id: Option<String>,
    #[serde(rename = "terminalNodeId")]
    pub terminal_node_id: Option<String>,
    #[serde(rename = "annotationsDigest")]
    pub annotations_digest: String,
}

/// Write a deployable bundle: `flow.json` (the embedded annotated graph),
/// `manifest.json` and a settings stub. The on-disk layout is documented in
/// `docs/bundle.md`; this stands in for the image-build pipeline.
pub fn emit_bundle(annotated: &AnnotatedGraph, out_dir: &Path) -> Result<BundleManifest, AdapterError> {
    let graph = &annotated.graph;

    let executor_mode = annotated
        .triples
        .iter()
        .find(|t| t.predicate == "executorMode" && t.subject == graph.flow_id)
        .map(|t| t.object.clone())
        .unwrap_or_else(|| "function".into());

    let targets: BTreeSet<&String> = graph.nodes.iter().flat_map(|n| n.all_targets()).collect();
    let executable = || graph.nodes.iter().filter(|n| n.node_type != "annotation");
    let entries: Vec<&str> = executable()
        .filter(|n| !targets.contains(&n.id))
        .map(|n| n.id.as_str())
        .collect();
    let sinks: Vec<&str> = executable()
        .filter(|n| n.wires.iter().all(|p| p.is_empty()))
        .map(|n| n.id.as_str())
        .collect();

    let digest = {
        let triples_json = serde_json::to_string(&annotated.triples)
            .map_err(|e| AdapterError::Validation(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(triples_json.as_bytes());
        format!("sha256:{:x}", hasher.finalize())
    };

    let name = if graph.label.is_empty() {
        graph.flow_id.clone()
    } else {
        graph.label.clone()
    };
    let manifest = BundleManifest {
        name,
        executor_mode,
        entry_node_id: single(&entries),
        terminal_node_id: single(&sinks),
        annotations_digest: digest,
    };

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("flow.json"), &annotated.embedded)?;
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| AdapterError::Validation(e.to_string()))?;
    std::fs::write(out_dir.join("manifest.json"), format!("{manifest_json}\n"))?;
    std::fs::write(
        out_dir.join("settings.json"),
        "{\n  \"httpNodeRoot\": \"/\",\n  \"credentialSecret\": false\n}\n",
    )?;

    Ok(manifest)
}

fn single(ids: &[&str]) -> Option<String> {
    match ids {
        [only] => Some((*only).to_string()),
        _ => None,
    }
}
