//! The task runtime: a stateless evaluator of fingerprinted task graphs
//! with a shared memoizing cache, served over HTTP.

mod cache;
mod exec;
mod graph;
mod load;
mod protocol;
mod service;

use std::sync::Arc;

use serde_json::{json, Value as Json};

use crate::expr::SignalValues;
use crate::table::{serialized_len, Table};
use crate::value::Value;

pub use cache::{CacheStats, Lookup, ValueCache};
pub use exec::{execute, ExecError, ExecOptions, QueryResult, QueryStats};
pub use graph::{
    canonical_json, canonicalize_params, fingerprint, graph_fingerprints, lower, node_steps,
    Fingerprint, GraphError, Lowered, Query, TaskKind, TaskNode, PIPELINE_OP,
};
pub use load::{LoadError, Loader};
pub use protocol::{decode_request, decode_response, encode_request, encode_response, Response};
pub use service::{serve, Embedded, Endpoint, EndpointError, HttpEndpoint, Runtime, ServeConfig, Server};

/// A node's value. Tables carry the signals derived by the steps that
/// produced them (e.g. by `extent`), so later steps can read them.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeValue {
    Table {
        table: Arc<Table>,
        signals: Arc<SignalValues>,
    },
    Scalar(Value),
}

impl NodeValue {
    pub fn table(table: Table) -> NodeValue {
        NodeValue::Table {
            table: Arc::new(table),
            signals: Arc::new(SignalValues::new()),
        }
    }

    pub fn as_table(&self) -> Option<&Arc<Table>> {
        match self {
            NodeValue::Table { table, .. } => Some(table),
            NodeValue::Scalar(_) => None,
        }
    }

    fn signals_json(signals: &SignalValues) -> Json {
        Json::Object(signals.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
    }

    /// Serialized byte length, the unit of cache accounting.
    pub fn size(&self) -> usize {
        match self {
            NodeValue::Table { table, signals } => {
                let extra = if signals.is_empty() {
                    0
                } else {
                    Self::signals_json(signals).to_string().len()
                };
                serialized_len(table) + extra
            }
            NodeValue::Scalar(v) => v.to_json().to_string().len(),
        }
    }

    /// The wire form sent to clients: the table alone, or the value.
    pub fn to_wire(&self) -> Json {
        match self {
            NodeValue::Table { table, .. } => serde_json::to_value(&**table).expect("tables always serialize"),
            NodeValue::Scalar(v) => v.to_json(),
        }
    }

    /// Byte length of [`to_wire`](Self::to_wire).
    pub fn wire_len(&self) -> usize {
        match self {
            NodeValue::Table { table, .. } => serialized_len(table),
            NodeValue::Scalar(v) => v.to_json().to_string().len(),
        }
    }

    fn to_cache_bytes(&self) -> Vec<u8> {
        let doc = match self {
            NodeValue::Table { table, signals } => json!({
                "table": serde_json::to_value(&**table).expect("tables always serialize"),
                "signals": Self::signals_json(signals),
            }),
            NodeValue::Scalar(v) => json!({ "value": v.to_json() }),
        };
        serde_json::to_vec(&doc).expect("json serializes")
    }

    fn from_cache_bytes(bytes: &[u8]) -> Option<NodeValue> {
        let doc: Json = serde_json::from_slice(bytes).ok()?;
        if let Some(v) = doc.get("value") {
            return Value::from_json(v).ok().map(NodeValue::Scalar);
        }
        let table: Table = serde_json::from_value(doc.get("table")?.clone()).ok()?;
        let mut signals = SignalValues::new();
        for (k, v) in doc.get("signals")?.as_object()? {
            signals.insert(k.clone(), Value::from_json(v).ok()?);
        }
        Some(NodeValue::Table {
            table: Arc::new(table),
            signals: Arc::new(signals),
        })
    }
}
