//! Vega specification model: datasets, signals, and an opaque remainder.
//!
//! Only the `data` and `signals` sections are modeled. Everything else is
//! kept as raw text and re-emitted unchanged.

mod graph;

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde_json::value::RawValue;
use serde_json::{Map, Value as Json};

use crate::expr::{analyze, evaluate, parse_expression, Expr, NoDatum, RefSet, SignalValues};
use crate::transform::{Transform, TransformError};
use crate::value::Value;

pub use graph::{dependency_graph, DepGraph, NodeId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("dataset `{dataset}` is sourced from unknown dataset `{source_name}`")]
    UnknownDataset { dataset: String, source_name: String },
    #[error("cyclic dependency through {0}")]
    CyclicDependency(String),
}

/// Raw JSON text, compared and emitted byte for byte.
#[derive(Debug, Clone)]
pub struct Opaque(Box<RawValue>);

impl Opaque {
    pub fn raw(&self) -> &str {
        self.0.get()
    }

    pub fn to_json(&self) -> Json {
        serde_json::from_str(self.raw()).expect("raw values are valid JSON")
    }
}

impl PartialEq for Opaque {
    fn eq(&self, other: &Self) -> bool {
        self.raw() == other.raw()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
    /// A format (or format option) the loaders do not implement.
    Unsupported,
}

impl DataFormat {
    /// Derive the format from a dataset's `format` property. A missing type
    /// means JSON; `parse` may be absent or `"auto"`.
    fn from_property(format: Option<&Json>) -> DataFormat {
        let Some(format) = format else {
            return DataFormat::Json;
        };
        let Some(obj) = format.as_object() else {
            return DataFormat::Unsupported;
        };
        if obj.keys().any(|k| k != "type" && k != "parse") {
            return DataFormat::Unsupported;
        }
        match obj.get("parse") {
            None => {}
            Some(Json::String(s)) if s == "auto" => {}
            Some(_) => return DataFormat::Unsupported,
        }
        match obj.get("type").map(|t| t.as_str()) {
            None | Some(Some("json")) => DataFormat::Json,
            Some(Some("csv")) => DataFormat::Csv,
            _ => DataFormat::Unsupported,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::Json => "json",
            DataFormat::Unsupported => "unsupported",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Url { url: String, format: DataFormat },
    Inline(Json),
    Named(String),
    /// A `source` list, signal-valued `url`, or other form passed through
    /// untouched under its original key.
    Other { key: String, value: Json },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedParam {
    /// Dotted location within the parameters, e.g. `extent.signal`.
    pub path: String,
    pub text: String,
    /// `None` when the text did not parse.
    pub ast: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub op: String,
    /// Parameters without the `type` key, in document order.
    pub params: Map<String, Json>,
    pub exprs: Vec<ParsedParam>,
}

impl TransformSpec {
    pub fn new(op: impl Into<String>, params: Map<String, Json>) -> TransformSpec {
        let mut exprs = Vec::new();
        for (key, value) in &params {
            if key == "expr" {
                if let Json::String(text) = value {
                    exprs.push(parsed(key.clone(), text));
                    continue;
                }
            }
            collect_signal_exprs(value, key, &mut exprs);
        }
        TransformSpec {
            op: op.into(),
            params,
            exprs,
        }
    }

    fn from_json(value: &Json) -> Result<TransformSpec, SpecError> {
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("transform must be an object"))?;
        let op = obj
            .get("type")
            .and_then(Json::as_str)
            .ok_or_else(|| malformed("transform without a string `type`"))?;
        let params = obj
            .iter()
            .filter(|(k, _)| *k != "type")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(TransformSpec::new(op, params))
    }

    pub fn to_json(&self) -> Json {
        let mut obj = Map::new();
        obj.insert("type".into(), Json::String(self.op.clone()));
        obj.extend(self.params.iter().map(|(k, v)| (k.clone(), v.clone())));
        Json::Object(obj)
    }

    pub fn typed(&self) -> Result<Transform, TransformError> {
        Transform::parse_params(&self.op, &self.params)
    }

    pub fn has_unparsed(&self) -> bool {
        self.exprs.iter().any(|p| p.ast.is_none())
    }

    /// Names referenced by the parsed expression parameters.
    pub fn refs(&self) -> RefSet {
        let mut refs = RefSet::default();
        for p in &self.exprs {
            if let Some(ast) = &p.ast {
                refs.extend(analyze(ast));
            }
        }
        refs
    }

    /// Signal written by an `extent` transform.
    pub fn output_signal(&self) -> Option<&str> {
        if self.op == "extent" {
            self.params.get("signal").and_then(Json::as_str)
        } else {
            None
        }
    }
}

fn parsed(path: String, text: &str) -> ParsedParam {
    ParsedParam {
        path,
        text: text.to_string(),
        ast: parse_expression(text).ok(),
    }
}

fn collect_signal_exprs(value: &Json, path: &str, out: &mut Vec<ParsedParam>) {
    match value {
        Json::Object(obj) => {
            if let Some(Json::String(text)) = obj.get("signal") {
                out.push(parsed(format!("{path}.signal"), text));
            }
            for (k, v) in obj {
                if k != "signal" {
                    collect_signal_exprs(v, &format!("{path}.{k}"), out);
                }
            }
        }
        Json::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                collect_signal_exprs(v, &format!("{path}.{i}"), out);
            }
        }
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDef {
    pub name: String,
    pub source: DataSource,
    pub transforms: Vec<TransformSpec>,
    /// Remaining properties (`format`, `on`, ...), in document order.
    pub extra: Map<String, Json>,
}

impl DatasetDef {
    fn from_json(value: &Json) -> Result<DatasetDef, SpecError> {
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("data entry must be an object"))?;
        let name = obj
            .get("name")
            .and_then(Json::as_str)
            .ok_or_else(|| malformed("data entry without a string `name`"))?
            .to_string();
        let mut extra = Map::new();
        let mut transforms = Vec::new();
        let mut source = DataSource::None;
        for (key, v) in obj {
            match key.as_str() {
                "name" => {}
                "url" => match v {
                    Json::String(url) => {
                        source = DataSource::Url {
                            url: url.clone(),
                            format: DataFormat::Unsupported,
                        }
                    }
                    other => {
                        source = DataSource::Other {
                            key: key.clone(),
                            value: other.clone(),
                        }
                    }
                },
                "values" => source = DataSource::Inline(v.clone()),
                "source" => {
                    source = match v {
                        Json::String(s) => DataSource::Named(s.clone()),
                        other => DataSource::Other {
                            key: key.clone(),
                            value: other.clone(),
                        },
                    }
                }
                "transform" => {
                    let items = v
                        .as_array()
                        .ok_or_else(|| malformed(format!("`{name}.transform` must be an array")))?;
                    transforms = items
                        .iter()
                        .map(TransformSpec::from_json)
                        .collect::<Result<_, _>>()?;
                }
                _ => {
                    extra.insert(key.clone(), v.clone());
                }
            }
        }
        if let DataSource::Url { format, .. } = &mut source {
            *format = DataFormat::from_property(extra.get("format"));
        }
        Ok(DatasetDef {
            name,
            source,
            transforms,
            extra,
        })
    }

    pub fn to_json(&self) -> Json {
        let mut obj = Map::new();
        obj.insert("name".into(), Json::String(self.name.clone()));
        match &self.source {
            DataSource::Url { url, .. } => {
                obj.insert("url".into(), Json::String(url.clone()));
            }
            DataSource::Inline(values) => {
                obj.insert("values".into(), values.clone());
            }
            DataSource::Named(name) => {
                obj.insert("source".into(), Json::String(name.clone()));
            }
            DataSource::Other { key, value } => {
                obj.insert(key.clone(), value.clone());
            }
            DataSource::None => {}
        }
        obj.extend(self.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        if !self.transforms.is_empty() {
            obj.insert(
                "transform".into(),
                Json::Array(self.transforms.iter().map(TransformSpec::to_json).collect()),
            );
        }
        Json::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalDef {
    pub name: String,
    /// Initial `value`; object values are kept in `raw` and read as null.
    pub initial: Value,
    pub initial_opaque: bool,
    /// Has `on` or `bind` clauses.
    pub interactive: bool,
    /// The `update` expression, or `init` when there is no `update`.
    pub update_expr: Option<ParsedParam>,
    /// The full signal definition as written.
    pub raw: Map<String, Json>,
}

impl SignalDef {
    fn from_json(value: &Json) -> Result<SignalDef, SpecError> {
        let raw = value
            .as_object()
            .ok_or_else(|| malformed("signal must be an object"))?
            .clone();
        SignalDef::from_raw(raw)
    }

    pub fn from_raw(raw: Map<String, Json>) -> Result<SignalDef, SpecError> {
        let name = raw
            .get("name")
            .and_then(Json::as_str)
            .ok_or_else(|| malformed("signal without a string `name`"))?
            .to_string();
        let (initial, initial_opaque) = match raw.get("value") {
            None => (Value::Null, false),
            Some(v) => match Value::from_json(v) {
                Ok(v) => (v, false),
                Err(_) => (Value::Null, true),
            },
        };
        let update_expr = ["update", "init"].iter().find_map(|key| match raw.get(*key) {
            Some(Json::String(text)) => Some(parsed((*key).to_string(), text)),
            _ => None,
        });
        Ok(SignalDef {
            name,
            initial,
            initial_opaque,
            interactive: raw.contains_key("on") || raw.contains_key("bind"),
            update_expr,
            raw,
        })
    }

    /// Names read by the update expression.
    pub fn refs(&self) -> RefSet {
        self.update_expr
            .as_ref()
            .and_then(|p| p.ast.as_ref())
            .map(analyze)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisSpec {
    pub datasets: Vec<DatasetDef>,
    pub signals: Vec<SignalDef>,
    /// Top-level properties other than `data` and `signals`, in order.
    pub remainder: Vec<(String, Opaque)>,
}

fn malformed(msg: impl Into<String>) -> SpecError {
    SpecError::MalformedDocument(msg.into())
}

pub fn parse_spec(document: &[u8]) -> Result<VisSpec, SpecError> {
    let top: IndexMap<String, Box<RawValue>> =
        serde_json::from_slice(document).map_err(|e| malformed(e.to_string()))?;
    let mut spec = VisSpec::default();
    for (key, raw) in top {
        match key.as_str() {
            "data" | "signals" => {
                let items: Vec<Json> = serde_json::from_str(raw.get())
                    .map_err(|_| malformed(format!("`{key}` must be an array")))?;
                if key == "data" {
                    spec.datasets = items.iter().map(DatasetDef::from_json).collect::<Result<_, _>>()?;
                } else {
                    spec.signals = items.iter().map(SignalDef::from_json).collect::<Result<_, _>>()?;
                }
            }
            _ => spec.remainder.push((key, Opaque(raw))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Empty `data` and `signals` arrays are omitted.
pub fn emit_spec(spec: &VisSpec) -> Vec<u8> {
    let signals: Vec<Json> = spec.signals.iter().map(|s| Json::Object(s.raw.clone())).collect();
    let mut parts: Vec<(String, String)> = Vec::new();
    if !spec.datasets.is_empty() {
        let datasets = spec.datasets.iter().map(DatasetDef::to_json).collect();
        parts.push(("\"data\"".into(), Json::Array(datasets).to_string()));
    }
    if !signals.is_empty() {
        parts.push(("\"signals\"".into(), Json::Array(signals).to_string()));
    }
    for (key, raw) in &spec.remainder {
        parts.push((Json::String(key.clone()).to_string(), raw.raw().to_string()));
    }
    let mut out = String::from("{");
    for (i, (key, value)) in parts.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(key);
        out.push(':');
        out.push_str(value);
    }
    out.push('}');
    out.into_bytes()
}

impl VisSpec {
    pub fn dataset(&self, name: &str) -> Option<&DatasetDef> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn signal(&self, name: &str) -> Option<&SignalDef> {
        self.signals.iter().find(|s| s.name == name)
    }

    /// Signals written by `extent` transforms, with their dataset and step.
    pub fn derived_signals(&self) -> Vec<(String, String, usize)> {
        let mut out = Vec::new();
        for d in &self.datasets {
            for (i, t) in d.transforms.iter().enumerate() {
                if let Some(s) = t.output_signal() {
                    out.push((s.to_string(), d.name.clone(), i + 1));
                }
            }
        }
        out
    }

    /// Declared and derived signal names.
    pub fn signal_names(&self) -> BTreeSet<String> {
        self.signals
            .iter()
            .map(|s| s.name.clone())
            .chain(self.derived_signals().into_iter().map(|(s, _, _)| s))
            .collect()
    }

    /// Declared initial values, with update expressions of non-interactive
    /// signals applied.
    pub fn initial_signal_values(&self) -> SignalValues {
        let mut env: SignalValues = self
            .signals
            .iter()
            .map(|s| (s.name.clone(), s.initial.clone()))
            .collect();
        self.refresh_update_signals(&mut env);
        env
    }

    /// Re-evaluate the update expressions of non-interactive signals in
    /// dependency order. Signals whose expression fails keep their value.
    pub fn refresh_update_signals(&self, env: &mut SignalValues) {
        let order: Vec<&SignalDef> = match dependency_graph(self).and_then(|g| g.topological_order()) {
            Ok(nodes) => nodes
                .iter()
                .filter_map(|n| match n {
                    NodeId::Signal(name) => self.signal(name),
                    _ => None,
                })
                .collect(),
            Err(_) => self.signals.iter().collect(),
        };
        for s in order {
            if s.interactive {
                continue;
            }
            if let Some(ast) = s.update_expr.as_ref().and_then(|p| p.ast.as_ref()) {
                if let Ok(v) = evaluate(ast, &NoDatum, env) {
                    env.insert(s.name.clone(), v);
                }
            }
        }
    }

    fn validate(&self) -> Result<(), SpecError> {
        let mut seen = BTreeSet::new();
        let names = self
            .datasets
            .iter()
            .map(|d| d.name.clone())
            .chain(self.signals.iter().map(|s| s.name.clone()))
            .chain(self.derived_signals().into_iter().map(|(s, _, _)| s));
        for name in names {
            if !seen.insert(name.clone()) {
                return Err(SpecError::DuplicateName(name));
            }
        }
        for d in &self.datasets {
            if let DataSource::Named(source) = &d.source {
                if self.dataset(source).is_none() {
                    return Err(SpecError::UnknownDataset {
                        dataset: d.name.clone(),
                        source_name: source.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Signals and datasets referenced from the opaque remainder: `data`
    /// properties naming datasets, and expressions under `signal`, `update`,
    /// `expr` and `test` keys.
    pub fn remainder_refs(&self) -> RefSet {
        let mut refs = RefSet::default();
        for (_, raw) in &self.remainder {
            scan_refs(&raw.to_json(), &mut refs);
        }
        refs
    }
}

fn scan_refs(value: &Json, refs: &mut RefSet) {
    match value {
        Json::Object(obj) => {
            for (k, v) in obj {
                match (k.as_str(), v) {
                    ("data", Json::String(name)) => {
                        refs.datasets.insert(name.clone());
                    }
                    ("signal" | "update" | "expr" | "test", Json::String(text)) => {
                        if let Ok(ast) = parse_expression(text) {
                            let found = analyze(&ast);
                            refs.signals.extend(found.signals);
                            refs.datasets.extend(found.datasets);
                        }
                    }
                    _ => scan_refs(v, refs),
                }
            }
        }
        Json::Array(items) => items.iter().for_each(|v| scan_refs(v, refs)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const HISTOGRAM: &str = r#"{
        "$schema": "https://vega.github.io/schema/vega/v5.json",
        "width": 400,
        "signals": [
            {"name": "brush", "value": [0, 500],
             "on": [{"events": "mousemove", "update": "[x(), x()]"}]}
        ],
        "data": [
            {"name": "points", "url": "data/points.csv", "format": {"type": "csv", "parse": "auto"},
             "transform": [
                {"type": "bin", "field": "x", "extent": [0, 1000], "maxbins": 10},
                {"type": "aggregate", "groupby": ["bin0", "bin1"]}
             ]}
        ],
        "marks": [{"type": "rect", "from": {"data": "points"},
                   "encode": {"update": {"x": {"scale": "x", "field": "bin0"}}}}]
    }"#;

    #[test]
    fn parses_histogram_shape() {
        let spec = parse_spec(HISTOGRAM.as_bytes()).unwrap();
        assert_eq!(spec.datasets.len(), 1);
        assert_eq!(spec.datasets[0].transforms.len(), 2);
        assert_eq!(
            spec.datasets[0].source,
            DataSource::Url {
                url: "data/points.csv".into(),
                format: DataFormat::Csv
            }
        );
        assert_eq!(spec.signals.len(), 1);
        assert!(spec.signals[0].interactive);
        assert_eq!(spec.signals[0].initial, Value::List(vec![Value::Int(0), Value::Int(500)]));
        assert_eq!(spec.remainder.len(), 3);
        assert_eq!(spec.remainder_refs().datasets.into_iter().collect::<Vec<_>>(), vec!["points"]);
    }

    #[test]
    fn empty_spec() {
        let spec = parse_spec(br#"{"data":[],"signals":[]}"#).unwrap();
        assert_eq!(spec, VisSpec::default());
        assert_eq!(emit_spec(&spec), b"{}");
        assert_eq!(parse_spec(b"{}").unwrap(), spec);
    }

    #[test]
    fn stack_params_preserved() {
        let doc = r#"{"data":[{"name":"t","values":[],"transform":[{"type":"stack","groupby":["k"],"field":"v","sort":{"field":"c"}}]}]}"#;
        let spec = parse_spec(doc.as_bytes()).unwrap();
        let t = &spec.datasets[0].transforms[0];
        assert_eq!(t.op, "stack");
        assert_eq!(t.to_json(), serde_json::from_str::<Json>(r#"{"type":"stack","groupby":["k"],"field":"v","sort":{"field":"c"}}"#).unwrap());
    }

    #[test]
    fn round_trip_and_raw_remainder() {
        let spec = parse_spec(HISTOGRAM.as_bytes()).unwrap();
        let emitted = emit_spec(&spec);
        let text = String::from_utf8(emitted.clone()).unwrap();
        assert!(text.contains(r#""marks":[{"type": "rect", "from": {"data": "points"},"#));
        assert_eq!(parse_spec(&emitted).unwrap(), spec);
    }

    #[test]
    fn unparsed_expressions_are_recorded() {
        let doc = r#"{"data":[{"name":"t","values":[],"transform":[{"type":"filter","expr":"datum.a >"}]}]}"#;
        let spec = parse_spec(doc.as_bytes()).unwrap();
        assert!(spec.datasets[0].transforms[0].has_unparsed());
    }

    #[test]
    fn signal_expressions_in_params() {
        let t = TransformSpec::new(
            "bin",
            serde_json::from_str(r#"{"field":"x","extent":{"signal":"ext"}}"#).unwrap(),
        );
        assert_eq!(t.exprs.len(), 1);
        assert_eq!(t.exprs[0].path, "extent.signal");
        assert_eq!(t.refs().signals.into_iter().collect::<Vec<_>>(), vec!["ext"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_spec(b"{"), Err(SpecError::MalformedDocument(_))));
        assert!(matches!(parse_spec(b"[]"), Err(SpecError::MalformedDocument(_))));
        assert!(matches!(
            parse_spec(br#"{"data":[{"name":"a"},{"name":"a"}]}"#),
            Err(SpecError::DuplicateName(_))
        ));
        assert!(matches!(
            parse_spec(br#"{"data":[{"name":"a"}],"signals":[{"name":"a"}]}"#),
            Err(SpecError::DuplicateName(_))
        ));
        assert!(matches!(
            parse_spec(br#"{"data":[{"name":"a","source":"b"}]}"#),
            Err(SpecError::UnknownDataset { .. })
        ));
    }

    #[test]
    fn update_signals_follow_dependencies() {
        let doc = r#"{"signals":[
            {"name":"b","update":"a * 2"},
            {"name":"a","value":3},
            {"name":"c","value":1,"on":[{"events":"click","update":"5"}],"update":"99"}]}"#;
        let env = parse_spec(doc.as_bytes()).unwrap().initial_signal_values();
        assert_eq!(env["b"], Value::Int(6));
        assert_eq!(env["c"], Value::Int(1));
    }

    #[test]
    fn formats() {
        let f = |s: &str| DataFormat::from_property(Some(&serde_json::from_str(s).unwrap()));
        assert_eq!(DataFormat::from_property(None), DataFormat::Json);
        assert_eq!(f(r#"{"type":"csv"}"#), DataFormat::Csv);
        assert_eq!(f(r#"{"type":"tsv"}"#), DataFormat::Unsupported);
        assert_eq!(f(r#"{"type":"json","property":"rows"}"#), DataFormat::Unsupported);
    }
}
