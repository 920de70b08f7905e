//! Wrapping a flow as an OpenWhisk-protocol action (POST /init + POST /run),
//! the client used to invoke platform actions, and deployable bundle
//! emission.

mod bundle;
mod client;
mod server;

pub use bundle::{emit_bundle, BundleManifest};
pub use client::{ActionClient, InvokeOutcome};
pub use server::{serve_action, ActionServer, ActionServerConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("bind error: {0}")]
    Bind(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("http error ({status}): {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
