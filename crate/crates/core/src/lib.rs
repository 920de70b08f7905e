//! Flow-based FaaS workflow engine.
//!
//! Parses Node-RED-compatible flow graphs and executes them as services or
//! as OpenWhisk-protocol actions, with fork-join orchestration of remote
//! function invocations, deployment-annotation extraction, linear-flow
//! compilation to sequence specs, a local FaaS platform simulator with
//! cold/hot container semantics and a billing ledger, and a store-and-forward
//! edge ingestion service.

pub mod adapter;
pub mod annotations;
pub mod etl;
pub mod flow;
pub mod runtime;
pub mod seqcomp;
pub mod sim;

pub use flow::{FlowGraph, NodeSpec, SubflowTemplate};
pub use runtime::{Message, PartsInfo};
