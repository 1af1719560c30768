//! JSON request/response messages.
//!
//! ```json
//! {"type":"query","graph":[
//!    {"id":0,"kind":"url","url":"points.csv","format":"csv"},
//!    {"id":1,"kind":"signal","name":"brush","value":[0,500]},
//!    {"id":2,"kind":"transform","op":"filter","params":{"expr":"..."},"inputs":[0,1]}],
//!  "request":[2]}
//! ```
//!
//! Inline roots carry `"table"` in the table wire format. Responses are
//! `{"type":"result","values":{..},"fingerprints":{..},"stats":{..}}` or
//! `{"type":"error","message":..,"node":..}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Map, Value as Json};

use super::exec::{ExecError, QueryResult, QueryStats};
use super::graph::{Fingerprint, Query, TaskKind, TaskNode};
use super::NodeValue;
use crate::spec::DataFormat;
use crate::table::Table;
use crate::value::Value;

fn format_from_name(name: &str) -> Option<DataFormat> {
    match name {
        "csv" => Some(DataFormat::Csv),
        "json" => Some(DataFormat::Json),
        _ => None,
    }
}

fn node_to_json(node: &TaskNode) -> Json {
    let mut obj = Map::new();
    obj.insert("id".into(), json!(node.id));
    match &node.kind {
        TaskKind::Url { url, format } => {
            obj.insert("kind".into(), json!("url"));
            obj.insert("url".into(), json!(url));
            obj.insert("format".into(), json!(format.name()));
        }
        TaskKind::Inline(table) => {
            obj.insert("kind".into(), json!("inline"));
            obj.insert("table".into(), serde_json::to_value(&**table).expect("tables always serialize"));
        }
        TaskKind::Signal { name, value } => {
            obj.insert("kind".into(), json!("signal"));
            obj.insert("name".into(), json!(name));
            obj.insert("value".into(), value.to_json());
        }
        TaskKind::Transform { op, params, inputs } => {
            obj.insert("kind".into(), json!("transform"));
            obj.insert("op".into(), json!(op));
            obj.insert("params".into(), params.clone());
            obj.insert("inputs".into(), json!(inputs));
        }
    }
    Json::Object(obj)
}

pub fn encode_request(query: &Query) -> Vec<u8> {
    let doc = json!({
        "type": "query",
        "graph": query.graph.iter().map(node_to_json).collect::<Vec<_>>(),
        "request": query.requested,
    });
    serde_json::to_vec(&doc).expect("json serializes")
}

fn field<'a>(obj: &'a Map<String, Json>, key: &str, ctx: &str) -> Result<&'a Json, String> {
    obj.get(key).ok_or_else(|| format!("{ctx}: missing `{key}`"))
}

fn str_field<'a>(obj: &'a Map<String, Json>, key: &str, ctx: &str) -> Result<&'a str, String> {
    field(obj, key, ctx)?
        .as_str()
        .ok_or_else(|| format!("{ctx}: `{key}` must be a string"))
}

fn index(v: &Json, ctx: &str) -> Result<usize, String> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| format!("{ctx}: expected a node id, got {v}"))
}

fn node_from_json(v: &Json, pos: usize) -> Result<TaskNode, String> {
    let ctx = format!("graph[{pos}]");
    let obj = v.as_object().ok_or_else(|| format!("{ctx}: expected an object"))?;
    let id = index(field(obj, "id", &ctx)?, &ctx)?;
    let kind = match str_field(obj, "kind", &ctx)? {
        "url" => TaskKind::Url {
            url: str_field(obj, "url", &ctx)?.to_string(),
            format: format_from_name(str_field(obj, "format", &ctx)?)
                .ok_or_else(|| format!("{ctx}: unknown format"))?,
        },
        "inline" => {
            let table: Table = serde_json::from_value(field(obj, "table", &ctx)?.clone())
                .map_err(|e| format!("{ctx}: {e}"))?;
            TaskKind::Inline(Arc::new(table))
        }
        "signal" => TaskKind::Signal {
            name: str_field(obj, "name", &ctx)?.to_string(),
            value: Value::from_json(field(obj, "value", &ctx)?).map_err(|e| format!("{ctx}: {e}"))?,
        },
        "transform" => {
            let params = field(obj, "params", &ctx)?;
            if !params.is_object() {
                return Err(format!("{ctx}: `params` must be an object"));
            }
            let inputs = field(obj, "inputs", &ctx)?
                .as_array()
                .ok_or_else(|| format!("{ctx}: `inputs` must be a list"))?
                .iter()
                .map(|i| index(i, &ctx))
                .collect::<Result<_, _>>()?;
            TaskKind::Transform {
                op: str_field(obj, "op", &ctx)?.to_string(),
                params: params.clone(),
                inputs,
            }
        }
        other => return Err(format!("{ctx}: unknown kind `{other}`")),
    };
    Ok(TaskNode { id, kind })
}

/// Parse a query message. Errors are human-readable messages.
pub fn decode_request(bytes: &[u8]) -> Result<Query, String> {
    let doc: Json = serde_json::from_slice(bytes).map_err(|e| format!("malformed request: {e}"))?;
    let obj = doc.as_object().ok_or("malformed request: expected an object")?;
    if obj.get("type").and_then(Json::as_str) != Some("query") {
        return Err("malformed request: `type` must be \"query\"".into());
    }
    let graph = field(obj, "graph", "request")?
        .as_array()
        .ok_or("request: `graph` must be a list")?
        .iter()
        .enumerate()
        .map(|(i, n)| node_from_json(n, i))
        .collect::<Result<Vec<_>, _>>()?;
    let requested = field(obj, "request", "request")?
        .as_array()
        .ok_or("request: `request` must be a list")?
        .iter()
        .map(|i| index(i, "request"))
        .collect::<Result<Vec<_>, _>>()?;
    let query = Query { graph, requested };
    query.validate().map_err(|e| e.to_string())?;
    Ok(query)
}

fn hex_list(fps: &[Fingerprint]) -> Json {
    Json::Array(fps.iter().map(|f| Json::String(f.to_hex())).collect())
}

pub fn encode_response(result: &Result<QueryResult, ExecError>) -> Vec<u8> {
    let doc = match result {
        Ok(r) => json!({
            "type": "result",
            "values": r.values.iter().map(|(id, v)| (id.to_string(), v.to_wire())).collect::<Map<_, _>>(),
            "fingerprints": r.fingerprints.iter().map(|(id, f)| (id.to_string(), json!(f.to_hex()))).collect::<Map<_, _>>(),
            "stats": {
                "computed": hex_list(&r.stats.computed),
                "hits": hex_list(&r.stats.hits),
                "loaded": hex_list(&r.stats.loaded),
                "elapsed_ms": r.stats.elapsed_ms,
                "bytes": r.stats.bytes,
            },
        }),
        Err(e) => json!({"type": "error", "message": e.message, "node": e.node}),
    };
    serde_json::to_vec(&doc).expect("json serializes")
}

/// A decoded response message.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Result(QueryResult),
    Error(ExecError),
}

fn decode_value(v: &Json) -> Result<NodeValue, String> {
    if v.get("schema").is_some() {
        let table: Table = serde_json::from_value(v.clone()).map_err(|e| e.to_string())?;
        Ok(NodeValue::table(table))
    } else {
        Value::from_json(v).map(NodeValue::Scalar).map_err(|e| e.to_string())
    }
}

fn fp_list(v: Option<&Json>) -> Result<Vec<Fingerprint>, String> {
    v.and_then(Json::as_array)
        .map(|items| {
            items
                .iter()
                .map(|h| h.as_str().and_then(Fingerprint::from_hex).ok_or(format!("bad fingerprint {h}")))
                .collect()
        })
        .unwrap_or(Ok(Vec::new()))
}

fn id_key(k: &str) -> Result<usize, String> {
    k.parse().map_err(|_| format!("bad node id `{k}`"))
}

pub fn decode_response(bytes: &[u8]) -> Result<Response, String> {
    let doc: Json = serde_json::from_slice(bytes).map_err(|e| format!("malformed response: {e}"))?;
    match doc.get("type").and_then(Json::as_str) {
        Some("error") => Ok(Response::Error(ExecError {
            node: doc.get("node").and_then(Json::as_u64).map(|n| n as usize),
            message: doc.get("message").and_then(Json::as_str).unwrap_or_default().to_string(),
        })),
        Some("result") => {
            let mut values = BTreeMap::new();
            for (k, v) in doc.get("values").and_then(Json::as_object).ok_or("response: missing values")? {
                values.insert(id_key(k)?, decode_value(v)?);
            }
            let mut fingerprints = BTreeMap::new();
            if let Some(fps) = doc.get("fingerprints").and_then(Json::as_object) {
                for (k, v) in fps {
                    let fp = v.as_str().and_then(Fingerprint::from_hex).ok_or(format!("bad fingerprint {v}"))?;
                    fingerprints.insert(id_key(k)?, fp);
                }
            }
            let stats = doc.get("stats").ok_or("response: missing stats")?;
            Ok(Response::Result(QueryResult {
                values,
                fingerprints,
                stats: QueryStats {
                    computed: fp_list(stats.get("computed"))?,
                    hits: fp_list(stats.get("hits"))?,
                    loaded: fp_list(stats.get("loaded"))?,
                    elapsed_ms: stats.get("elapsed_ms").and_then(Json::as_f64).unwrap_or(0.0),
                    bytes: stats.get("bytes").and_then(Json::as_u64).unwrap_or(0) as usize,
                },
            }))
        }
        _ => Err("malformed response: unknown type".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn empty_query() {
        let q = decode_request(br#"{"type":"query","graph":[],"request":[]}"#).unwrap();
        assert_eq!(q, Query::default());
        let bytes = encode_response(&Ok(QueryResult::default()));
        let doc: Json = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(doc["type"], "result");
        assert_eq!(doc["values"], json!({}));
    }

    #[test]
    fn request_round_trip() {
        let table = Table::new(vec![("a".into(), Column::Int(vec![Some(1), None]))]).unwrap();
        let q = Query {
            graph: vec![
                TaskNode { id: 0, kind: TaskKind::Inline(Arc::new(table)) },
                TaskNode { id: 1, kind: TaskKind::Signal { name: "s".into(), value: Value::Float(0.5) } },
                TaskNode {
                    id: 2,
                    kind: TaskKind::Transform { op: "filter".into(), params: json!({"expr": "datum.a > s"}), inputs: vec![0, 1] },
                },
                TaskNode { id: 3, kind: TaskKind::Url { url: "x.csv".into(), format: DataFormat::Csv } },
            ],
            requested: vec![2],
        };
        let back = decode_request(&encode_request(&q)).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.validate().unwrap(), q.validate().unwrap());
    }

    #[test]
    fn malformed_requests() {
        assert!(decode_request(br#"{"type":"query","graph":[],"req"#).unwrap_err().contains("malformed"));
        assert!(decode_request(br#"{"type":"query","graph":[],"request":[3]}"#).is_err());
        assert!(decode_request(br#"{"type":"query","graph":[{"id":0,"kind":"nope"}],"request":[]}"#).is_err());
        assert!(decode_request(br#"{"type":"hello"}"#).is_err());
    }

    #[test]
    fn response_round_trip() {
        let t = Table::new(vec![("a".into(), Column::Float(vec![Some(1.5)]))]).unwrap();
        let mut r = QueryResult::default();
        r.values.insert(4, NodeValue::table(t));
        r.values.insert(5, NodeValue::Scalar(Value::Int(3)));
        r.fingerprints.insert(4, Fingerprint(1));
        r.fingerprints.insert(5, Fingerprint(2));
        r.stats.computed = vec![Fingerprint(1)];
        r.stats.bytes = 10;
        let Response::Result(back) = decode_response(&encode_response(&Ok(r.clone()))).unwrap() else {
            panic!("expected a result")
        };
        assert_eq!(back, r);
        let err = ExecError { node: Some(2), message: "boom".into() };
        assert_eq!(decode_response(&encode_response(&Err(err.clone()))).unwrap(), Response::Error(err));
    }
}
