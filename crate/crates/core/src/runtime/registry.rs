use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::message::Message;
use super::RuntimeError;

/// A user-supplied transform callable, looked up by name from function
/// nodes with a `handler` prop.
pub type Handler = Arc<dyn Fn(Message) -> Result<Message, RuntimeError> + Send + Sync>;

/// Maps node types and handler names to executable logic. Built-in node
/// types always have executors; custom node types become known once a
/// handler is registered under the type name.
#[derive(Clone, Default)]
pub struct HandlerRegistry {
    handlers: BTreeMap<String, Handler>,
}

impl HandlerRegistry {
    pub fn with_builtins() -> Self {
        let mut registry = HandlerRegistry::default();
        registry.register("identity", |msg| Ok(msg));
        registry.register("increment", |mut msg| {
            match msg.payload.as_f64() {
                Some(n) => {
                    msg.payload = number(n + 1.0);
                    Ok(msg)
                }
                None => Err(RuntimeError::HandlerFailed(
                    "increment: payload is not a number".into(),
                )),
            }
        });
        registry
    }

    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(Message) -> Result<Message, RuntimeError> + Send + Sync + 'static,
    {
        self.handlers.insert(name.to_string(), Arc::new(f));
    }

    pub fn handler(&self, name: &str) -> Option<Handler> {
        self.handlers.get(name).cloned()
    }

    pub fn known_names(&self) -> Vec<String> {
        self.handlers.keys().cloned().collect()
    }
}

fn number(n: f64) -> serde_json::Value {
    if n.fract() == 0.0 && n.abs() < 9e15 {
        json!(n as i64)
    } else {
        json!(n)
    }
}
