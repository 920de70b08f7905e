use std::collections::BTreeMap;

use serde_json::Value;

use super::message::{Message, PartsInfo};
use super::RuntimeError;

/// Split an array payload into ceil(len/split_size) partial messages. Chunk
/// `i` carries rows `[i*s, min((i+1)*s, len))` and a parts descriptor keyed
/// by the original msg id; row order is preserved within and across chunks.
///
/// An empty array produces a single zero-count control record so the join
/// resolves to an empty result instead of hanging.
pub fn exec_split(msg: &Message, split_size: usize) -> Result<Vec<Message>, RuntimeError> {
    if split_size == 0 {
        return Err(RuntimeError::HandlerFailed("splitSize must be >= 1".into()));
    }
    let rows = msg
        .payload
        .as_array()
        .ok_or(RuntimeError::NotAnArray)?;

    if rows.is_empty() {
        let mut control = msg.clone();
        control.payload = Value::Array(Vec::new());
        control.parts = Some(PartsInfo {
            group_id: msg.msg_id.clone(),
            index: 0,
            count: 0,
        });
        return Ok(vec![control]);
    }

    let count = rows.len().div_ceil(split_size);
    let mut out = Vec::with_capacity(count);
    for (index, chunk) in rows.chunks(split_size).enumerate() {
        let mut part = msg.clone();
        part.payload = Value::Array(chunk.to_vec());
        part.parts = Some(PartsInfo {
            group_id: msg.msg_id.clone(),
            index,
            count,
        });
        out.push(part);
    }
    Ok(out)
}

/// Accumulation state for one join node: group id -> collected parts.
/// Complete groups are emitted and removed atomically.
#[derive(Debug, Default)]
pub struct JoinState {
    groups: BTreeMap<String, GroupState>,
}

#[derive(Debug)]
struct GroupState {
    count: usize,
    parts: BTreeMap<usize, Message>,
    pub first_seen_ms: u128,
}

impl JoinState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn contains_group(&self, group_id: &str) -> bool {
        self.groups.contains_key(group_id)
    }

    /// Groups whose first part arrived before `deadline_ms`, with the
    /// indices still missing. Timed-out groups are removed.
    pub fn take_expired(&mut self, deadline_ms: u128) -> Vec<(String, Vec<usize>)> {
        let expired: Vec<String> = self
            .groups
            .iter()
            .filter(|(_, g)| g.first_seen_ms < deadline_ms)
            .map(|(id, _)| id.clone())
            .collect();
        expired
            .into_iter()
            .map(|id| {
                let group = self.groups.remove(&id).unwrap();
                let missing = (0..group.count)
                    .filter(|i| !group.parts.contains_key(i))
                    .collect();
                (id, missing)
            })
            .collect()
    }
}

/// Accumulate one partial message. When all `count` parts of its group have
/// arrived, returns the regrouped message: msg id = group id, payload =
/// concatenation of chunk payloads in index order, parts cleared.
pub fn exec_join(state: &mut JoinState, msg: Message, now_ms: u128) -> Result<Option<Message>, RuntimeError> {
    let parts = msg
        .parts
        .clone()
        .ok_or_else(|| RuntimeError::HandlerFailed("join: message has no parts".into()))?;

    if parts.is_empty_group() {
        let mut out = msg;
        out.msg_id = parts.group_id;
        out.payload = Value::Array(Vec::new());
        out.parts = None;
        return Ok(Some(out));
    }
    if parts.index >= parts.count {
        return Err(RuntimeError::HandlerFailed(format!(
            "join: part index {} out of range for count {}",
            parts.index, parts.count
        )));
    }

    let group = state
        .groups
        .entry(parts.group_id.clone())
        .or_insert_with(|| GroupState {
            count: parts.count,
            parts: BTreeMap::new(),
            first_seen_ms: now_ms,
        });
    if group.parts.contains_key(&parts.index) {
        return Err(RuntimeError::DuplicatePart {
            group: parts.group_id.clone(),
            index: parts.index,
        });
    }
    group.parts.insert(parts.index, msg);

    if group.parts.len() < group.count {
        return Ok(None);
    }

    let group = state.groups.remove(&parts.group_id).unwrap();
    let mut payload = Vec::new();
    let mut fields = BTreeMap::new();
    for (_, part) in group.parts {
        match part.payload {
            Value::Array(items) => payload.extend(items),
            other => payload.push(other),
        }
        fields.extend(part.fields);
    }
    Ok(Some(Message {
        msg_id: parts.group_id,
        payload: Value::Array(payload),
        parts: None,
        fields,
    }))
}
