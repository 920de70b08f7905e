use std::sync::Arc;
use std::time::Duration;

use futures::future::BoxFuture;
use serde_json::{json, Value};

use super::SimHandler;

fn sync(f: impl Fn(Value) -> Result<Value, String> + Send + Sync + 'static) -> SimHandler {
    let f = Arc::new(f);
    Arc::new(move |params| {
        let f = f.clone();
        Box::pin(async move { f(params) }) as BoxFuture<'static, Result<Value, String>>
    })
}

/// Map a numeric operation over the params: element-wise for arrays,
/// over the `n` field of objects, directly for bare numbers.
fn numeric(name: &'static str, op: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SimHandler {
    let apply_scalar = move |v: &Value| -> Result<Value, String> {
        v.as_f64()
            .map(|n| to_number(op(n)))
            .ok_or_else(|| format!("{name}: expected a number, got {v}"))
    };
    sync(move |params| match &params {
        Value::Array(items) => items
            .iter()
            .map(|v| apply_scalar(v))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Array),
        Value::Object(map) => match map.get("n") {
            Some(n) => {
                let mut out = map.clone();
                out.insert("n".into(), apply_scalar(n)?);
                Ok(Value::Object(out))
            }
            None => Err(format!("{name}: object params need an `n` field")),
        },
        other => apply_scalar(other),
    })
}

fn to_number(n: f64) -> Value {
    if n.fract() == 0.0 && n.abs() < 9e15 {
        json!(n as i64)
    } else {
        json!(n)
    }
}

/// Handlers registered on every fresh simulator.
pub fn builtin_handlers() -> Vec<(String, SimHandler)> {
    let mut handlers: Vec<(String, SimHandler)> = Vec::new();

    handlers.push(("identity".into(), sync(Ok)));
    handlers.push(("increment".into(), numeric("increment", |n| n + 1.0)));
    handlers.push(("square".into(), numeric("square", |n| n * n)));

    // tags every element (or the scalar) with a string marker
    handlers.push((
        "string-tag".into(),
        sync(|params| {
            let tag = |v: &Value| -> Value {
                match v {
                    Value::String(s) => json!(format!("tagged:{s}")),
                    other => json!(format!("tagged:{other}")),
                }
            };
            Ok(match &params {
                Value::Array(items) => Value::Array(items.iter().map(tag).collect()),
                other => tag(other),
            })
        }),
    ));

    handlers.push((
        "hello".into(),
        sync(|params| {
            let name = params
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or("world");
            Ok(json!({ "greeting": format!("hello {name}") }))
        }),
    ));

    handlers.push(("fail".into(), sync(|_| Err("handler always fails".into()))));

    // sleeps params.ms then echoes params unchanged
    handlers.push((
        "sleep".into(),
        Arc::new(|params: Value| {
            Box::pin(async move {
                let ms = params.get("ms").and_then(Value::as_u64).unwrap_or(0);
                tokio::time::sleep(Duration::from_millis(ms)).await;
                Ok(params)
            }) as BoxFuture<'static, Result<Value, String>>
        }),
    ));

    handlers
}
