use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::message::Message;
use super::registry::HandlerRegistry;
use super::RuntimeError;

/// One declarative field operation of a function node. Replaces Node-RED's
/// embedded JavaScript adapters with a language-neutral op list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum FieldOp {
    /// Set `to` to a literal value.
    Set { to: String, value: Value },
    /// Move the value at `from` to `to`; `from` is removed.
    Move { from: String, to: String },
    /// Copy the value at `from` to `to`.
    Copy { from: String, to: String },
    /// Remove the value at `path`.
    Delete { path: String },
}

/// Either a declarative op list or a registered handler name.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransformSpec {
    Ops(Vec<FieldOp>),
    Handler { handler: String },
}

/// Apply a transform to a message. The msg id and parts descriptor are never
/// altered; ops apply in order.
pub fn exec_transform(
    spec: &TransformSpec,
    registry: &HandlerRegistry,
    msg: Message,
) -> Result<Message, RuntimeError> {
    match spec {
        TransformSpec::Ops(ops) => apply_ops(ops, msg),
        TransformSpec::Handler { handler } => {
            let f = registry
                .handler(handler)
                .ok_or_else(|| RuntimeError::UnknownHandler(handler.clone()))?;
            let mut out = f(msg.clone())?;
            out.msg_id = msg.msg_id;
            out.parts = msg.parts;
            Ok(out)
        }
    }
}

fn apply_ops(ops: &[FieldOp], mut msg: Message) -> Result<Message, RuntimeError> {
    for op in ops {
        match op {
            FieldOp::Set { to, value } => msg.set_path(to, value.clone()),
            FieldOp::Move { from, to } => {
                let value = msg
                    .delete_path(from)
                    .ok_or_else(|| RuntimeError::PathError(from.clone()))?;
                msg.set_path(to, value);
            }
            FieldOp::Copy { from, to } => {
                let value = msg
                    .get_path(from)
                    .ok_or_else(|| RuntimeError::PathError(from.clone()))?;
                msg.set_path(to, value);
            }
            FieldOp::Delete { path } => {
                msg.delete_path(path);
            }
        }
    }
    Ok(msg)
}
