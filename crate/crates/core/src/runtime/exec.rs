use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use super::cache::{Lookup, ValueCache};
use super::graph::{Fingerprint, Query, TaskKind};
use super::load::Loader;
use super::NodeValue;
use crate::expr::SignalValues;
use crate::transform::{Transform, SERVER_TRANSFORMS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ExecError {
    pub node: Option<usize>,
    pub message: String,
}

impl ExecError {
    fn at(node: usize, message: impl Into<String>) -> ExecError {
        ExecError {
            node: Some(node),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecOptions {
    /// Load url roots on every query instead of caching them.
    pub no_url_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryStats {
    /// Transform nodes evaluated by this query.
    pub computed: Vec<Fingerprint>,
    /// Transform nodes served from the cache.
    pub hits: Vec<Fingerprint>,
    /// Url roots read from their source.
    pub loaded: Vec<Fingerprint>,
    pub elapsed_ms: f64,
    /// Wire bytes of the returned values.
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryResult {
    /// Requested node id → value.
    pub values: BTreeMap<usize, NodeValue>,
    pub fingerprints: BTreeMap<usize, Fingerprint>,
    pub stats: QueryStats,
}

struct Run<'a> {
    query: &'a Query,
    fps: Vec<Fingerprint>,
    cache: &'a ValueCache,
    loader: &'a Loader,
    options: ExecOptions,
    memo: HashMap<Fingerprint, NodeValue>,
    stats: QueryStats,
}

impl Run<'_> {
    fn eval(&mut self, id: usize) -> Result<NodeValue, ExecError> {
        let fp = self.fps[id];
        if let Some(v) = self.memo.get(&fp) {
            return Ok(v.clone());
        }
        let value = match &self.query.graph[id].kind {
            TaskKind::Signal { value, .. } => NodeValue::Scalar(value.clone()),
            TaskKind::Inline(table) => NodeValue::Table {
                table: Arc::clone(table),
                signals: Arc::new(SignalValues::new()),
            },
            TaskKind::Url { url, format } => {
                let loader = self.loader;
                let load = || {
                    loader
                        .load(url, *format)
                        .map(NodeValue::table)
                        .map_err(|e| ExecError::at(id, e.to_string()))
                };
                if self.options.no_url_cache {
                    self.stats.loaded.push(fp);
                    load()?
                } else {
                    let (v, how) = self.cache.get_or_compute(fp, load)?;
                    if how == Lookup::Computed {
                        self.stats.loaded.push(fp);
                    }
                    v
                }
            }
            TaskKind::Transform { .. } => {
                let cache = self.cache;
                let (v, how) = cache.get_or_compute(fp, || self.compute(id))?;
                match how {
                    Lookup::Computed => self.stats.computed.push(fp),
                    Lookup::Hit | Lookup::Waited => self.stats.hits.push(fp),
                }
                v
            }
        };
        self.memo.insert(fp, value.clone());
        Ok(value)
    }

    fn compute(&mut self, id: usize) -> Result<NodeValue, ExecError> {
        let kind = &self.query.graph[id].kind;
        let inputs = kind.inputs();
        let NodeValue::Table { table, signals: derived } = self.eval(inputs[0])? else {
            return Err(ExecError::at(id, "first input must be a table"));
        };
        let mut env: SignalValues = (*derived).clone();
        for &s in &inputs[1..] {
            let TaskKind::Signal { name, .. } = &self.query.graph[s].kind else {
                return Err(ExecError::at(id, format!("input {s} must be a signal")));
            };
            if let NodeValue::Scalar(v) = self.eval(s)? {
                env.insert(name.clone(), v);
            }
        }
        let mut out_signals = (*derived).clone();
        let mut current = (*table).clone();
        for (op, params) in kind.steps() {
            if !SERVER_TRANSFORMS.contains(&op.as_str()) {
                return Err(ExecError::at(id, format!("unsupported op `{op}`")));
            }
            let t = Transform::parse_params(&op, &params).map_err(|e| ExecError::at(id, format!("{op}: {e}")))?;
            current = t.apply(&current, &mut env).map_err(|e| ExecError::at(id, format!("{op}: {e}")))?;
            if let Some(name) = t.output_signal() {
                out_signals.insert(name.to_string(), env[name].clone());
            }
        }
        Ok(NodeValue::Table {
            table: Arc::new(current),
            signals: Arc::new(out_signals),
        })
    }
}

/// Evaluate the requested nodes of `query`. Only requested nodes and their
/// ancestors are visited, and cached values cut the traversal short. Any
/// failure fails the whole query.
pub fn execute(
    query: &Query,
    cache: &ValueCache,
    loader: &Loader,
    options: ExecOptions,
) -> Result<QueryResult, ExecError> {
    let start = Instant::now();
    let fps = query.validate().map_err(|e| ExecError {
        node: None,
        message: e.to_string(),
    })?;
    let mut run = Run {
        query,
        fps,
        cache,
        loader,
        options,
        memo: HashMap::new(),
        stats: QueryStats::default(),
    };
    let mut result = QueryResult::default();
    for &id in &query.requested {
        let v = run.eval(id)?;
        result.fingerprints.insert(id, run.fps[id]);
        result.values.insert(id, v);
    }
    run.stats.bytes = result.values.values().map(NodeValue::wire_len).sum();
    run.stats.elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
    result.stats = run.stats;
    Ok(result)
}
