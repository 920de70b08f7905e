//! File-backed append-log spool with tombstones and compaction on load.
//! Format (one JSON object per line, documented in `docs/spool-format.md`):
//!
//! ```text
//! {"op":"put","item":{...DataItem...}}
//! {"op":"del","id":"<itemId>"}
//! ```
//!
//! Every append is fsynced so a killed process loses nothing it reported
//! as spooled. Loading replays the log and rewrites it with live items only.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::{json, Value};

use super::{DataItem, EtlError};

struct Inner {
    file: File,
    // insertion-ordered live items
    order: Vec<String>,
    items: HashMap<String, DataItem>,
}

pub struct SpoolStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl SpoolStore {
    /// Open (or create) a spool, replaying and compacting the log.
    pub fn open(path: &Path) -> Result<Self, EtlError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| EtlError::SpoolLoad(e.to_string()))?;
        }
        let mut order = Vec::new();
        let mut items: HashMap<String, DataItem> = HashMap::new();

        if path.exists() {
            let reader = BufReader::new(
                File::open(path).map_err(|e| EtlError::SpoolLoad(e.to_string()))?,
            );
            for line in reader.lines() {
                let line = line.map_err(|e| EtlError::SpoolLoad(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                // a torn final line from a crash is tolerated
                let Ok(record) = serde_json::from_str::<Value>(&line) else {
                    continue;
                };
                match record.get("op").and_then(Value::as_str) {
                    Some("put") => {
                        if let Some(item) = record
                            .get("item")
                            .and_then(|i| serde_json::from_value::<DataItem>(i.clone()).ok())
                        {
                            if !items.contains_key(&item.item_id) {
                                order.push(item.item_id.clone());
                            }
                            items.insert(item.item_id.clone(), item);
                        }
                    }
                    Some("del") => {
                        if let Some(id) = record.get("id").and_then(Value::as_str) {
                            items.remove(id);
                            order.retain(|o| o != id);
                        }
                    }
                    _ => {}
                }
            }
        }

        // compact: rewrite with live puts only
        let tmp = path.with_extension("compacting");
        {
            let mut out =
                File::create(&tmp).map_err(|e| EtlError::SpoolLoad(e.to_string()))?;
            for id in &order {
                let line = json!({ "op": "put", "item": items[id] });
                writeln!(out, "{line}").map_err(|e| EtlError::SpoolLoad(e.to_string()))?;
            }
            out.sync_data().map_err(|e| EtlError::SpoolLoad(e.to_string()))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| EtlError::SpoolLoad(e.to_string()))?;

        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| EtlError::SpoolLoad(e.to_string()))?;

        Ok(SpoolStore {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner { file, order, items }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably append an item. An id already present is an error: an item
    /// appears at most once in the spool.
    pub fn put(&self, item: &DataItem) -> Result<(), EtlError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.items.contains_key(&item.item_id) {
            return Err(EtlError::SpoolWrite(format!(
                "item `{}` already spooled",
                item.item_id
            )));
        }
        let line = json!({ "op": "put", "item": item });
        writeln!(inner.file, "{line}").map_err(|e| EtlError::SpoolWrite(e.to_string()))?;
        inner
            .file
            .sync_data()
            .map_err(|e| EtlError::SpoolWrite(e.to_string()))?;
        inner.order.push(item.item_id.clone());
        inner.items.insert(item.item_id.clone(), item.clone());
        Ok(())
    }

    /// Durably tombstone an item (after sink acknowledgment).
    pub fn delete(&self, item_id: &str) -> Result<bool, EtlError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.items.contains_key(item_id) {
            return Ok(false);
        }
        let line = json!({ "op": "del", "id": item_id });
        writeln!(inner.file, "{line}").map_err(|e| EtlError::SpoolWrite(e.to_string()))?;
        inner
            .file
            .sync_data()
            .map_err(|e| EtlError::SpoolWrite(e.to_string()))?;
        inner.items.remove(item_id);
        inner.order.retain(|o| o != item_id);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.inner.lock().unwrap().items.contains_key(item_id)
    }

    /// Live items in insertion order.
    pub fn snapshot(&self) -> Vec<DataItem> {
        let inner = self.inner.lock().unwrap();
        inner
            .order
            .iter()
            .filter_map(|id| inner.items.get(id).cloned())
            .collect()
    }
}
