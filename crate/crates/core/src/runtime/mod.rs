//! Event-driven message-passing engine over an expanded flow graph.
//!
//! Each node runs as a task consuming its inbox in arrival order; distinct
//! nodes progress independently. Action invocations overlap up to a
//! configurable window. Join groups complete atomically: a group is either
//! accumulating or emitted, never both.

mod engine;
mod message;
mod registry;
mod split_join;
mod transform;

pub use engine::{exec_action_invoke, start, ActionInvoker, DebugRecord, RuntimeConfig, RuntimeHandle};
pub use message::{Message, PartsInfo};
pub use registry::{Handler, HandlerRegistry};
pub use split_join::{exec_join, exec_split, JoinState};
pub use transform::{exec_transform, FieldOp, TransformSpec};

use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum RuntimeError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no executor for node type `{0}`")]
    UnknownType(String),
    #[error("unknown handler `{0}`")]
    UnknownHandler(String),
    #[error("split: payload is not an array")]
    NotAnArray,
    #[error("join: duplicate part {index} for group `{group}`")]
    DuplicatePart { group: String, index: usize },
    #[error("join: group `{group}` timed out, missing indices {missing:?}")]
    JoinTimeout { group: String, missing: Vec<usize> },
    #[error("path `{0}` not present in message")]
    PathError(String),
    #[error("handler failed: {0}")]
    HandlerFailed(String),
    #[error("bind error: {0}")]
    BindError(String),
    #[error("action invoke failed: {0}")]
    InvokeError(String),
    #[error("timed out waiting for flow completion")]
    Timeout,
    #[error("runtime fault: {0}")]
    RuntimeFault(String),
}
