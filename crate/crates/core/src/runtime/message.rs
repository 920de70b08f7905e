use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Position of a partial message within its split group. `group_id` is the
/// original message's id; regrouping at the join relies on it.
///
/// `count == 0` marks the empty-group control record emitted when an empty
/// array is split; the join resolves it to an empty result immediately and
/// intermediate nodes pass it through without processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartsInfo {
    #[serde(rename = "groupId")]
    pub group_id: String,
    pub index: usize,
    pub count: usize,
}

impl PartsInfo {
    pub fn is_empty_group(&self) -> bool {
        self.count == 0
    }
}

/// Unit of dataflow. `msg_id` is assigned once at injection and carried
/// unchanged through transforms and action invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    #[serde(rename = "msgId")]
    pub msg_id: String,
    pub payload: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parts: Option<PartsInfo>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, Value>,
}

impl Message {
    pub fn new(msg_id: impl Into<String>, payload: Value) -> Self {
        Message {
            msg_id: msg_id.into(),
            payload,
            parts: None,
            fields: BTreeMap::new(),
        }
    }

    pub fn fresh(payload: Value) -> Self {
        Message::new(uuid::Uuid::new_v4().to_string(), payload)
    }

    /// Resolve a dotted path against the message: `payload`, `payload.x.y`
    /// or `fields.<name>[.path]`.
    pub fn get_path(&self, path: &str) -> Option<Value> {
        let (root, rest) = split_root(path);
        let base = match root {
            "payload" => Some(&self.payload),
            "fields" => {
                let (field, tail) = split_root(rest?);
                return self
                    .fields
                    .get(field)
                    .and_then(|v| descend(v, tail))
                    .cloned();
            }
            // bare name is shorthand for fields.<name>
            other => return self.fields.get(other).and_then(|v| descend(v, rest)).cloned(),
        }?;
        descend(base, rest).cloned()
    }

    /// Set a dotted path, creating intermediate objects as needed.
    pub fn set_path(&mut self, path: &str, value: Value) {
        let (root, rest) = split_root(path);
        match root {
            "payload" => match rest {
                None => self.payload = value,
                Some(tail) => set_nested(&mut self.payload, tail, value),
            },
            "fields" => {
                if let Some(tail) = rest {
                    let (field, inner) = split_root(tail);
                    match inner {
                        None => {
                            self.fields.insert(field.to_string(), value);
                        }
                        Some(inner) => {
                            let slot = self
                                .fields
                                .entry(field.to_string())
                                .or_insert(Value::Null);
                            set_nested(slot, inner, value);
                        }
                    }
                }
            }
            other => match rest {
                None => {
                    self.fields.insert(other.to_string(), value);
                }
                Some(tail) => {
                    let slot = self.fields.entry(other.to_string()).or_insert(Value::Null);
                    set_nested(slot, tail, value);
                }
            },
        }
    }

    /// Remove a dotted path; returns the removed value if present.
    pub fn delete_path(&mut self, path: &str) -> Option<Value> {
        let (root, rest) = split_root(path);
        match (root, rest) {
            ("payload", None) => Some(std::mem::replace(&mut self.payload, Value::Null)),
            ("payload", Some(tail)) => delete_nested(&mut self.payload, tail),
            ("fields", Some(tail)) => {
                let (field, inner) = split_root(tail);
                match inner {
                    None => self.fields.remove(field),
                    Some(inner) => self.fields.get_mut(field).and_then(|v| delete_nested(v, inner)),
                }
            }
            ("fields", None) => None,
            (other, None) => self.fields.remove(other),
            (other, Some(tail)) => self.fields.get_mut(other).and_then(|v| delete_nested(v, tail)),
        }
    }
}

fn split_root(path: &str) -> (&str, Option<&str>) {
    match path.split_once('.') {
        Some((head, tail)) => (head, Some(tail)),
        None => (path, None),
    }
}

fn descend<'a>(value: &'a Value, path: Option<&str>) -> Option<&'a Value> {
    let Some(path) = path else { return Some(value) };
    let mut cursor = value;
    for segment in path.split('.') {
        cursor = cursor.get(segment)?;
    }
    Some(cursor)
}

fn set_nested(target: &mut Value, path: &str, value: Value) {
    let mut cursor = target;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        if !cursor.is_object() {
            *cursor = Value::Object(serde_json::Map::new());
        }
        let map = cursor.as_object_mut().unwrap();
        if i == segments.len() - 1 {
            map.insert(segment.to_string(), value);
            return;
        }
        cursor = map.entry(segment.to_string()).or_insert(Value::Null);
    }
}

fn delete_nested(target: &mut Value, path: &str) -> Option<Value> {
    let (parent_path, leaf) = match path.rsplit_once('.') {
        Some((p, l)) => (Some(p), l),
        None => (None, path),
    };
    let parent = match parent_path {
        None => target,
        Some(p) => {
            let mut cursor = target;
            for segment in p.split('.') {
                cursor = cursor.get_mut(segment)?;
            }
            cursor
        }
    };
    parent.as_object_mut()?.remove(leaf)
}
