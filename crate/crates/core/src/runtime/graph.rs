//! Task graphs: lowering a server spec, fingerprinting, and pruning.
//!
//! # Fingerprint encoding
//!
//! A fingerprint is XXH3-128 (seed 0) over the bytes
//!
//! ```text
//! "SF1" tag field*
//! ```
//!
//! where `tag` is one byte (`U` url, `I` inline, `S` signal, `T` transform)
//! and every field is a little-endian u64 byte length followed by the bytes:
//!
//! * url: the url string, then the format name (`csv`/`json`)
//! * inline: the 16-byte little-endian digest of the serialized table
//! * signal: the name, then the canonical JSON of the value
//! * transform: the op, the canonical JSON of the params, then one 16-byte
//!   little-endian fingerprint per input, in input order
//!
//! Canonical JSON has object keys sorted by code point and no whitespace.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde_json::{Map, Value as Json};
use xxhash_rust::xxh3::Xxh3;

use crate::expr::{parse_expression, to_canonical_string, SignalValues};
use crate::planner::{ServerSource, ServerSpec};
use crate::spec::{DataFormat, TransformSpec};
use crate::table::{ingest_json_value, table_digest, Table, TableError};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u128);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Fingerprint {
    pub fn to_hex(self) -> String {
        self.to_string()
    }

    pub fn from_hex(s: &str) -> Option<Fingerprint> {
        if s.len() != 32 {
            return None;
        }
        u128::from_str_radix(s, 16).ok().map(Fingerprint)
    }
}

/// Op name of fused multi-step nodes.
pub const PIPELINE_OP: &str = "pipeline";

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    Url { url: String, format: DataFormat },
    Inline(Arc<Table>),
    Signal { name: String, value: Value },
    /// The first input is the table; the rest are signal nodes.
    Transform { op: String, params: Json, inputs: Vec<usize> },
}

impl TaskKind {
    pub fn inputs(&self) -> &[usize] {
        match self {
            TaskKind::Transform { inputs, .. } => inputs,
            _ => &[],
        }
    }

    pub fn is_root(&self) -> bool {
        !matches!(self, TaskKind::Transform { .. })
    }

    /// The `(op, params)` steps of a transform node.
    pub fn steps(&self) -> Vec<(String, Map<String, Json>)> {
        let TaskKind::Transform { op, params, .. } = self else {
            return Vec::new();
        };
        let as_map = |v: &Json| v.as_object().cloned().unwrap_or_default();
        if op == PIPELINE_OP {
            params
                .get("steps")
                .and_then(Json::as_array)
                .map(|steps| {
                    steps
                        .iter()
                        .map(|s| {
                            let op = s.get("op").and_then(Json::as_str).unwrap_or_default().to_string();
                            (op, s.get("params").map(as_map).unwrap_or_default())
                        })
                        .collect()
                })
                .unwrap_or_default()
        } else {
            vec![(op.clone(), as_map(params))]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: usize,
    pub kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub graph: Vec<TaskNode>,
    pub requested: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("node {0}: ids must equal positions")]
    BadId(usize),
    #[error("node {node} reads node {input}, which is not an earlier node")]
    ForwardInput { node: usize, input: usize },
    #[error("node {0}: transform nodes need a table input")]
    MissingInput(usize),
    #[error("requested node {0} is not in the graph")]
    UnknownRequest(usize),
    #[error("inline data for `{dataset}`: {cause}")]
    Inline { dataset: String, cause: TableError },
    #[error("server dataset `{0}` is missing")]
    UnknownDataset(String),
}

/// Serialize JSON with sorted object keys.
pub fn canonical_json(v: &Json) -> String {
    fn write(v: &Json, out: &mut String) {
        match v {
            Json::Object(obj) => {
                let mut keys: Vec<&String> = obj.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Json::String(k.clone()).to_string());
                    out.push(':');
                    write(&obj[k], out);
                }
                out.push('}');
            }
            Json::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(v, &mut out);
    out
}

struct Encoder(Xxh3);

impl Encoder {
    fn new(tag: u8) -> Encoder {
        let mut h = Xxh3::new();
        h.update(b"SF1");
        h.update(&[tag]);
        Encoder(h)
    }

    fn field(&mut self, bytes: &[u8]) {
        self.0.update(&(bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
    }

    fn finish(self) -> Fingerprint {
        Fingerprint(self.0.digest128())
    }
}

/// Fingerprint of a node given the fingerprints of its inputs.
pub fn fingerprint(kind: &TaskKind, input_fps: &[Fingerprint]) -> Fingerprint {
    match kind {
        TaskKind::Url { url, format } => {
            let mut e = Encoder::new(b'U');
            e.field(url.as_bytes());
            e.field(format.name().as_bytes());
            e.finish()
        }
        TaskKind::Inline(table) => {
            let mut e = Encoder::new(b'I');
            e.field(&table_digest(table).to_le_bytes());
            e.finish()
        }
        TaskKind::Signal { name, value } => {
            let mut e = Encoder::new(b'S');
            e.field(name.as_bytes());
            e.field(canonical_json(&value.to_json()).as_bytes());
            e.finish()
        }
        TaskKind::Transform { op, params, .. } => {
            let mut e = Encoder::new(b'T');
            e.field(op.as_bytes());
            e.field(canonical_json(params).as_bytes());
            for fp in input_fps {
                e.field(&fp.0.to_le_bytes());
            }
            e.finish()
        }
    }
}

/// Check the topological encoding and fingerprint every node.
pub fn graph_fingerprints(graph: &[TaskNode]) -> Result<Vec<Fingerprint>, GraphError> {
    let mut fps: Vec<Fingerprint> = Vec::with_capacity(graph.len());
    for (pos, node) in graph.iter().enumerate() {
        if node.id != pos {
            return Err(GraphError::BadId(node.id));
        }
        let inputs = node.kind.inputs();
        if !node.kind.is_root() && inputs.is_empty() {
            return Err(GraphError::MissingInput(pos));
        }
        let mut input_fps = Vec::with_capacity(inputs.len());
        for &i in inputs {
            if i >= pos {
                return Err(GraphError::ForwardInput { node: pos, input: i });
            }
            input_fps.push(fps[i]);
        }
        fps.push(fingerprint(&node.kind, &input_fps));
    }
    Ok(fps)
}

impl Query {
    pub fn validate(&self) -> Result<Vec<Fingerprint>, GraphError> {
        let fps = graph_fingerprints(&self.graph)?;
        if let Some(&bad) = self.requested.iter().find(|&&r| r >= self.graph.len()) {
            return Err(GraphError::UnknownRequest(bad));
        }
        Ok(fps)
    }

    /// The sub-query holding only `requested` and their ancestors,
    /// renumbered in the original relative order.
    pub fn prune(&self, requested: &[usize]) -> Query {
        let mut keep = vec![false; self.graph.len()];
        let mut stack: Vec<usize> = requested.to_vec();
        while let Some(id) = stack.pop() {
            if !keep[id] {
                keep[id] = true;
                stack.extend(self.graph[id].kind.inputs());
            }
        }
        let mut remap = vec![usize::MAX; self.graph.len()];
        let mut graph = Vec::new();
        for node in &self.graph {
            if !keep[node.id] {
                continue;
            }
            remap[node.id] = graph.len();
            let kind = match &node.kind {
                TaskKind::Transform { op, params, inputs } => TaskKind::Transform {
                    op: op.clone(),
                    params: params.clone(),
                    inputs: inputs.iter().map(|&i| remap[i]).collect(),
                },
                other => other.clone(),
            };
            graph.push(TaskNode {
                id: graph.len(),
                kind,
            });
        }
        Query {
            graph,
            requested: requested.iter().map(|&r| remap[r]).collect(),
        }
    }
}

/// Rewrite expression strings in transform params to canonical form, so
/// that formatting differences do not change fingerprints.
pub fn canonicalize_params(params: &Map<String, Json>) -> Json {
    fn canon(text: &str) -> Json {
        match parse_expression(text) {
            Ok(ast) => Json::String(to_canonical_string(&ast)),
            Err(_) => Json::String(text.to_string()),
        }
    }
    fn walk(v: &Json) -> Json {
        match v {
            Json::Object(obj) => Json::Object(
                obj.iter()
                    .map(|(k, v)| match (k.as_str(), v) {
                        ("signal", Json::String(text)) => (k.clone(), canon(text)),
                        _ => (k.clone(), walk(v)),
                    })
                    .collect(),
            ),
            Json::Array(items) => Json::Array(items.iter().map(walk).collect()),
            other => other.clone(),
        }
    }
    Json::Object(
        params
            .iter()
            .map(|(k, v)| match (k.as_str(), v) {
                ("expr", Json::String(text)) => (k.clone(), canon(text)),
                _ => (k.clone(), walk(v)),
            })
            .collect(),
    )
}

/// A lowered server spec: the full graph for all delivered exports.
#[derive(Debug, Clone, PartialEq)]
pub struct Lowered {
    pub query: Query,
    /// Export name → node id, in request order.
    pub exports: Vec<(String, usize)>,
    pub fingerprints: Vec<Fingerprint>,
}

impl Lowered {
    pub fn export_node(&self, export: &str) -> Option<usize> {
        self.exports.iter().find(|(e, _)| e == export).map(|(_, id)| *id)
    }

    pub fn export_fingerprint(&self, export: &str) -> Option<Fingerprint> {
        self.export_node(export).map(|id| self.fingerprints[id])
    }

    /// The minimal query for a subset of the exports.
    pub fn query_for(&self, exports: &[String]) -> Query {
        let ids: Vec<usize> = exports.iter().filter_map(|e| self.export_node(e)).collect();
        self.query.prune(&ids)
    }
}

/// A node before fusion: roots, or a single step.
#[derive(Debug, Clone)]
enum Draft {
    Root(TaskKind),
    Step {
        op: String,
        params: Json,
        table: usize,
        signals: BTreeMap<String, usize>,
    },
}

#[derive(Default)]
struct Drafts {
    nodes: Vec<Draft>,
    fps: Vec<Fingerprint>,
    by_fp: HashMap<Fingerprint, usize>,
}

impl Drafts {
    fn add(&mut self, draft: Draft) -> usize {
        let fp = match &draft {
            Draft::Root(kind) => fingerprint(kind, &[]),
            Draft::Step {
                op,
                params,
                table,
                signals,
            } => {
                let inputs: Vec<Fingerprint> = std::iter::once(*table)
                    .chain(signals.values().copied())
                    .map(|i| self.fps[i])
                    .collect();
                fingerprint(
                    &TaskKind::Transform {
                        op: op.clone(),
                        params: params.clone(),
                        inputs: Vec::new(),
                    },
                    &inputs,
                )
            }
        };
        if let Some(&id) = self.by_fp.get(&fp) {
            return id;
        }
        self.nodes.push(draft);
        self.fps.push(fp);
        self.by_fp.insert(fp, self.nodes.len() - 1);
        self.nodes.len() - 1
    }
}

/// Lower a server spec into the task graph for `exports`.
///
/// Steps become nodes, identical steps over identical inputs are shared,
/// and linear runs (a step whose only consumer is the next step and which
/// is not itself requested) are fused into one pipeline node.
pub fn lower(
    server: &ServerSpec,
    signals: &SignalValues,
    exports: &[String],
) -> Result<Lowered, GraphError> {
    let mut drafts = Drafts::default();
    let mut outputs: BTreeMap<String, usize> = BTreeMap::new();
    let mut signal_nodes: BTreeMap<String, usize> = BTreeMap::new();

    fn lower_dataset(
        name: &str,
        server: &ServerSpec,
        signals: &SignalValues,
        drafts: &mut Drafts,
        outputs: &mut BTreeMap<String, usize>,
        signal_nodes: &mut BTreeMap<String, usize>,
    ) -> Result<usize, GraphError> {
        if let Some(&id) = outputs.get(name) {
            return Ok(id);
        }
        let d = server
            .dataset(name)
            .ok_or_else(|| GraphError::UnknownDataset(name.to_string()))?;
        let mut current = match &d.source {
            ServerSource::Url { url, format } => drafts.add(Draft::Root(TaskKind::Url {
                url: url.clone(),
                format: *format,
            })),
            ServerSource::Inline(values) => {
                let table = ingest_json_value(values).map_err(|cause| GraphError::Inline {
                    dataset: name.to_string(),
                    cause,
                })?;
                drafts.add(Draft::Root(TaskKind::Inline(Arc::new(table))))
            }
            ServerSource::Dataset(src) => {
                lower_dataset(src, server, signals, drafts, outputs, signal_nodes)?
            }
        };
        let mut derived: BTreeSet<String> = BTreeSet::new();
        for step in &d.transforms {
            let mut inputs = BTreeMap::new();
            for s in step.refs().signals {
                if derived.contains(&s) {
                    continue;
                }
                let node = *signal_nodes.entry(s.clone()).or_insert_with(|| {
                    let value = signals
                        .get(&s)
                        .or_else(|| server.signals.get(&s))
                        .cloned()
                        .unwrap_or(Value::Null);
                    drafts.add(Draft::Root(TaskKind::Signal {
                        name: s.clone(),
                        value,
                    }))
                });
                inputs.insert(s, node);
            }
            if let Some(out) = step.output_signal() {
                derived.insert(out.to_string());
            }
            current = drafts.add(Draft::Step {
                op: step.op.clone(),
                params: canonicalize_params(&step.params),
                table: current,
                signals: inputs,
            });
        }
        outputs.insert(name.to_string(), current);
        Ok(current)
    }

    let mut requested = Vec::new();
    for export in exports {
        let d = server
            .by_export(export)
            .ok_or_else(|| GraphError::UnknownDataset(export.clone()))?;
        let id = lower_dataset(&d.name, server, signals, &mut drafts, &mut outputs, &mut signal_nodes)?;
        requested.push((export.clone(), id));
    }
    fuse(&drafts, requested)
}

fn fuse(drafts: &Drafts, requested: Vec<(String, usize)>) -> Result<Lowered, GraphError> {
    // table consumers among nodes reachable from the requests
    let mut reachable = vec![false; drafts.nodes.len()];
    let mut stack: Vec<usize> = requested.iter().map(|(_, id)| *id).collect();
    while let Some(id) = stack.pop() {
        if reachable[id] {
            continue;
        }
        reachable[id] = true;
        if let Draft::Step { table, signals, .. } = &drafts.nodes[id] {
            stack.push(*table);
            stack.extend(signals.values());
        }
    }
    let mut consumers = vec![0usize; drafts.nodes.len()];
    for (id, d) in drafts.nodes.iter().enumerate() {
        if let (true, Draft::Step { table, .. }) = (reachable[id], d) {
            consumers[*table] += 1;
        }
    }
    let is_requested: BTreeSet<usize> = requested.iter().map(|(_, id)| *id).collect();
    let absorbed = |id: usize| {
        matches!(drafts.nodes[id], Draft::Step { .. }) && consumers[id] == 1 && !is_requested.contains(&id)
    };

    // emit final nodes depth first so inputs precede their consumers
    let mut final_id: HashMap<usize, usize> = HashMap::new();
    let mut graph: Vec<TaskNode> = Vec::new();

    fn emit(
        id: usize,
        drafts: &Drafts,
        absorbed: &dyn Fn(usize) -> bool,
        final_id: &mut HashMap<usize, usize>,
        graph: &mut Vec<TaskNode>,
    ) -> usize {
        if let Some(&f) = final_id.get(&id) {
            return f;
        }
        let kind = match &drafts.nodes[id] {
            Draft::Root(kind) => kind.clone(),
            Draft::Step { .. } => {
                // walk up through absorbed predecessors to the head of the run
                let mut chain = vec![id];
                loop {
                    let Draft::Step { table, .. } = &drafts.nodes[*chain.last().expect("non-empty")] else {
                        unreachable!("chains hold steps")
                    };
                    if absorbed(*table) {
                        chain.push(*table);
                    } else {
                        break;
                    }
                }
                chain.reverse();
                let Draft::Step { table: head_input, .. } = &drafts.nodes[chain[0]] else {
                    unreachable!("chains hold steps")
                };
                let mut signal_inputs: BTreeMap<String, usize> = BTreeMap::new();
                for &c in &chain {
                    if let Draft::Step { signals, .. } = &drafts.nodes[c] {
                        signal_inputs.extend(signals.iter().map(|(k, v)| (k.clone(), *v)));
                    }
                }
                let table_input = emit(*head_input, drafts, absorbed, final_id, graph);
                let mut inputs = vec![table_input];
                for s in signal_inputs.values() {
                    inputs.push(emit(*s, drafts, absorbed, final_id, graph));
                }
                let steps: Vec<(String, Json)> = chain
                    .iter()
                    .map(|&c| match &drafts.nodes[c] {
                        Draft::Step { op, params, .. } => (op.clone(), params.clone()),
                        Draft::Root(_) => unreachable!("chains hold steps"),
                    })
                    .collect();
                let (op, params) = if steps.len() == 1 {
                    steps.into_iter().next().expect("one step")
                } else {
                    let list: Vec<Json> = steps
                        .into_iter()
                        .map(|(op, params)| serde_json::json!({"op": op, "params": params}))
                        .collect();
                    (PIPELINE_OP.to_string(), serde_json::json!({ "steps": list }))
                };
                TaskKind::Transform { op, params, inputs }
            }
        };
        let f = graph.len();
        graph.push(TaskNode { id: f, kind });
        final_id.insert(id, f);
        f
    }

    let mut exports = Vec::new();
    for (name, id) in &requested {
        let f = emit(*id, drafts, &absorbed, &mut final_id, &mut graph);
        exports.push((name.clone(), f));
    }
    let fingerprints = graph_fingerprints(&graph)?;
    Ok(Lowered {
        query: Query {
            graph,
            requested: exports.iter().map(|(_, id)| *id).collect(),
        },
        exports,
        fingerprints,
    })
}

/// Steps of a transform node as typed specs.
pub fn node_steps(kind: &TaskKind) -> Vec<TransformSpec> {
    kind.steps()
        .into_iter()
        .map(|(op, params)| TransformSpec::new(op, params))
        .collect()
}
