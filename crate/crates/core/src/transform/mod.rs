//! Typed transforms over [`Table`]s.
//!
//! [`Transform::parse`] turns a Vega transform object into a typed transform,
//! rejecting parameters it does not implement. [`Transform::apply`] runs it.

mod aggregate;
mod bin;
mod filter;
pub(crate) mod keys;
mod order;
mod timeunit;
mod window;

use std::collections::BTreeSet;

use serde_json::{Map, Value as Json};

use crate::expr::{analyze, is_supported, parse_expression, EvalError, Expr, SignalValues};
use crate::table::{Table, TableError};

pub use aggregate::{transform_aggregate, transform_joinaggregate, AggOp, AggSpec};
pub use bin::{nice_bin_params, transform_bin, BinParams};
pub use filter::{transform_filter, transform_formula};
pub use keys::SortOrder;
pub use order::{transform_collect, transform_extent, transform_stack, StackOffset};
pub use timeunit::{transform_timeunit, TimeUnit};
pub use window::{transform_window, WindowOp, WindowSpec};

/// Transform types that may run on the server.
pub const SERVER_TRANSFORMS: [&str; 9] = [
    "filter",
    "formula",
    "bin",
    "timeunit",
    "aggregate",
    "joinaggregate",
    "window",
    "collect",
    "extent",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("degenerate extent [{lo}, {hi}]")]
    DegenerateExtent { lo: f64, hi: f64 },
    #[error("field `{0}` is not numeric")]
    NonNumericField(String),
    #[error("field `{0}` is not a timestamp")]
    NonTimestampField(String),
    #[error("`{op}` needs a numeric field but `{field}` is not")]
    NonNumericAggregate { op: String, field: String },
    #[error("bad `{op}` parameters: {message}")]
    BadParams { op: String, message: String },
    #[error("unsupported transform feature: {0}")]
    Unsupported(String),
}

pub type SortSpec = Vec<(String, SortOrder)>;

/// Where a bin transform takes its extent from.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtentSource {
    Literal(f64, f64),
    Signal(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Filter {
        expr: Expr,
    },
    Formula {
        expr: Expr,
        as_: String,
    },
    Bin {
        field: String,
        extent: ExtentSource,
        maxbins: u32,
        as_: [String; 2],
    },
    TimeUnit {
        field: String,
        unit: TimeUnit,
        as_: [String; 2],
    },
    Aggregate {
        groupby: Vec<String>,
        ops: Vec<AggSpec>,
    },
    JoinAggregate {
        groupby: Vec<String>,
        ops: Vec<AggSpec>,
    },
    Window {
        groupby: Vec<String>,
        sort: SortSpec,
        ops: Vec<WindowSpec>,
    },
    Collect {
        sort: SortSpec,
    },
    Extent {
        field: String,
        signal: Option<String>,
    },
    /// Client-side only; implemented so specs using it can be evaluated.
    Stack {
        field: String,
        groupby: Vec<String>,
        sort: SortSpec,
        offset: StackOffset,
        as_: [String; 2],
    },
}

struct Params<'a> {
    op: &'a str,
    map: &'a Map<String, Json>,
}

impl<'a> Params<'a> {
    fn bad(&self, message: impl Into<String>) -> TransformError {
        TransformError::BadParams {
            op: self.op.to_string(),
            message: message.into(),
        }
    }

    fn allow(&self, keys: &[&str]) -> Result<(), TransformError> {
        for key in self.map.keys() {
            if key != "type" && !keys.contains(&key.as_str()) {
                return Err(TransformError::Unsupported(format!("{}.{key}", self.op)));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Json> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn field_name(&self, v: &Json, key: &str) -> Result<String, TransformError> {
        match v {
            Json::String(s) => Ok(s.clone()),
            Json::Object(o) if o.len() == 1 => match o.get("field") {
                Some(Json::String(s)) => Ok(s.clone()),
                _ => Err(TransformError::Unsupported(format!("{}.{key}", self.op))),
            },
            _ => Err(self.bad(format!("`{key}` must name a field"))),
        }
    }

    fn field(&self, key: &str) -> Result<String, TransformError> {
        let v = self.get(key).ok_or_else(|| self.bad(format!("missing `{key}`")))?;
        self.field_name(v, key)
    }

    fn fields(&self, key: &str) -> Result<Vec<String>, TransformError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Json::Array(items)) => items.iter().map(|v| self.field_name(v, key)).collect(),
            Some(v) => Ok(vec![self.field_name(v, key)?]),
        }
    }

    /// A list whose entries may be null, e.g. aggregate `fields` and `as`.
    fn optional_names(&self, key: &str) -> Result<Vec<Option<String>>, TransformError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Json::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Json::Null => Ok(None),
                    other => self.field_name(other, key).map(Some),
                })
                .collect(),
            Some(_) => Err(self.bad(format!("`{key}` must be an array"))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>, TransformError> {
        match self.get(key) {
            None => Ok(None),
            Some(Json::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.bad(format!("`{key}` must be a string"))),
        }
    }

    fn strings(&self, key: &str) -> Result<Vec<String>, TransformError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Json::String(s)) => Ok(vec![s.clone()]),
            Some(Json::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| self.bad(format!("`{key}` must hold strings")))
                })
                .collect(),
            Some(_) => Err(self.bad(format!("`{key}` must be a string or array"))),
        }
    }

    fn expr(&self, key: &str) -> Result<Expr, TransformError> {
        match self.get(key) {
            Some(Json::String(text)) => {
                parse_expression(text).map_err(|e| self.bad(format!("`{key}`: {e}")))
            }
            Some(_) => Err(self.bad(format!("`{key}` must be an expression string"))),
            None => Err(self.bad(format!("missing `{key}`"))),
        }
    }

    fn pair(&self, key: &str, default: [&str; 2]) -> Result<[String; 2], TransformError> {
        let names = self.strings(key)?;
        match names.len() {
            0 => Ok(default.map(str::to_string)),
            2 => Ok([names[0].clone(), names[1].clone()]),
            _ => Err(self.bad(format!("`{key}` must name two fields"))),
        }
    }

    fn flag(&self, key: &str, allowed: bool) -> Result<(), TransformError> {
        match self.get(key) {
            None => Ok(()),
            Some(Json::Bool(b)) if *b == allowed => Ok(()),
            Some(_) => Err(TransformError::Unsupported(format!("{}.{key}", self.op))),
        }
    }

    fn sort(&self, key: &str) -> Result<SortSpec, TransformError> {
        let Some(v) = self.get(key) else {
            return Ok(Vec::new());
        };
        let Json::Object(o) = v else {
            return Err(self.bad(format!("`{key}` must be a comparator object")));
        };
        let sub = Params { op: self.op, map: o };
        sub.allow(&["field", "order"])?;
        let fields = sub.fields("field")?;
        let orders = sub.strings("order")?;
        if orders.len() > fields.len() {
            return Err(self.bad("more sort orders than fields"));
        }
        fields
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let order = match orders.get(i).map(String::as_str) {
                    None | Some("ascending") => SortOrder::Ascending,
                    Some("descending") => SortOrder::Descending,
                    Some(other) => return Err(self.bad(format!("unknown sort order `{other}`"))),
                };
                Ok((f, order))
            })
            .collect()
    }

    fn agg_specs(&self) -> Result<Vec<AggSpec>, TransformError> {
        let fields = self.optional_names("fields")?;
        let ops = self.strings("ops")?;
        let names = self.optional_names("as")?;
        let ops = if ops.is_empty() && fields.is_empty() {
            vec!["count".to_string()]
        } else {
            ops
        };
        if fields.len() > ops.len() || names.len() > ops.len() {
            return Err(self.bad("`fields`/`as` longer than `ops`"));
        }
        ops.iter()
            .enumerate()
            .map(|(i, name)| {
                let op = AggOp::from_name(name)
                    .ok_or_else(|| TransformError::Unsupported(format!("{}.ops `{name}`", self.op)))?;
                let field = fields.get(i).cloned().flatten();
                if op != AggOp::Count && field.is_none() {
                    return Err(self.bad(format!("`{name}` requires a field")));
                }
                let as_ = names
                    .get(i)
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| default_output_name(name, field.as_deref()));
                Ok(AggSpec { op, field, as_ })
            })
            .collect()
    }

    fn window_specs(&self) -> Result<Vec<WindowSpec>, TransformError> {
        let fields = self.optional_names("fields")?;
        let ops = self.strings("ops")?;
        let names = self.optional_names("as")?;
        if fields.len() > ops.len() || names.len() > ops.len() {
            return Err(self.bad("`fields`/`as` longer than `ops`"));
        }
        ops.iter()
            .enumerate()
            .map(|(i, name)| {
                let op = WindowOp::from_name(name)
                    .ok_or_else(|| TransformError::Unsupported(format!("window.ops `{name}`")))?;
                let field = fields.get(i).cloned().flatten();
                if op.needs_field() && field.is_none() {
                    return Err(self.bad(format!("`{name}` requires a field")));
                }
                let as_ = names
                    .get(i)
                    .cloned()
                    .flatten()
                    .unwrap_or_else(|| default_output_name(name, field.as_deref()));
                Ok(WindowSpec { op, field, as_ })
            })
            .collect()
    }
}

fn default_output_name(op: &str, field: Option<&str>) -> String {
    match field {
        Some(f) if !matches!(op, "count" | "row_number" | "rank" | "dense_rank") => {
            format!("{op}_{f}")
        }
        _ => op.to_string(),
    }
}

impl Transform {
    /// Parse a Vega transform object (including its `type` key).
    pub fn parse(obj: &Map<String, Json>) -> Result<Transform, TransformError> {
        let op = obj
            .get("type")
            .and_then(Json::as_str)
            .ok_or_else(|| TransformError::BadParams {
                op: "?".into(),
                message: "missing `type`".into(),
            })?;
        Transform::parse_params(op, obj)
    }

    /// Parse the parameters of a transform of type `op`. A `type` key in
    /// `map` is ignored.
    pub fn parse_params(op: &str, map: &Map<String, Json>) -> Result<Transform, TransformError> {
        let p = Params { op, map };
        let t = match op {
            "filter" => {
                p.allow(&["expr"])?;
                Transform::Filter { expr: p.expr("expr")? }
            }
            "formula" => {
                p.allow(&["expr", "as", "initonly"])?;
                Transform::Formula {
                    expr: p.expr("expr")?,
                    as_: p.string("as")?.ok_or_else(|| p.bad("missing `as`"))?,
                }
            }
            "bin" => {
                p.allow(&["field", "extent", "maxbins", "as", "nice"])?;
                p.flag("nice", true)?;
                let extent = match p.get("extent") {
                    Some(Json::Array(items)) if items.len() == 2 => {
                        match (items[0].as_f64(), items[1].as_f64()) {
                            (Some(lo), Some(hi)) => ExtentSource::Literal(lo, hi),
                            _ => return Err(p.bad("`extent` must hold two numbers")),
                        }
                    }
                    Some(Json::Object(o)) if o.len() == 1 && o.contains_key("signal") => {
                        let sub = Params { op, map: o };
                        ExtentSource::Signal(sub.expr("signal")?)
                    }
                    Some(_) => return Err(p.bad("`extent` must be a pair or a signal")),
                    None => return Err(p.bad("missing `extent`")),
                };
                let maxbins = match p.get("maxbins") {
                    None => 10,
                    Some(v) => v
                        .as_u64()
                        .filter(|&n| (1..=u32::MAX as u64).contains(&n))
                        .ok_or_else(|| p.bad("`maxbins` must be a positive integer"))?
                        as u32,
                };
                Transform::Bin {
                    field: p.field("field")?,
                    extent,
                    maxbins,
                    as_: p.pair("as", ["bin0", "bin1"])?,
                }
            }
            "timeunit" => {
                p.allow(&["field", "units", "as", "timezone", "interval"])?;
                p.flag("interval", true)?;
                match p.string("timezone")?.as_deref() {
                    None | Some("utc") => {}
                    Some(_) => return Err(TransformError::Unsupported("timeunit.timezone".into())),
                }
                let units = p.strings("units")?;
                let unit = TimeUnit::from_units(&units)
                    .ok_or_else(|| TransformError::Unsupported(format!("timeunit.units {units:?}")))?;
                Transform::TimeUnit {
                    field: p.field("field")?,
                    unit,
                    as_: p.pair("as", ["unit0", "unit1"])?,
                }
            }
            "aggregate" => {
                p.allow(&["groupby", "fields", "ops", "as", "drop", "cross"])?;
                p.flag("drop", true)?;
                p.flag("cross", false)?;
                Transform::Aggregate {
                    groupby: p.fields("groupby")?,
                    ops: p.agg_specs()?,
                }
            }
            "joinaggregate" => {
                p.allow(&["groupby", "fields", "ops", "as"])?;
                Transform::JoinAggregate {
                    groupby: p.fields("groupby")?,
                    ops: p.agg_specs()?,
                }
            }
            "window" => {
                p.allow(&["sort", "groupby", "ops", "fields", "as", "frame", "ignorePeers"])?;
                match p.get("frame") {
                    None => {}
                    Some(Json::Array(f)) if f.len() == 2 && f[0].is_null() && f[1] == 0 => {}
                    Some(_) => return Err(TransformError::Unsupported("window.frame".into())),
                }
                match p.get("ignorePeers") {
                    None | Some(Json::Bool(_)) => {}
                    Some(_) => return Err(p.bad("`ignorePeers` must be a boolean")),
                }
                Transform::Window {
                    groupby: p.fields("groupby")?,
                    sort: p.sort("sort")?,
                    ops: p.window_specs()?,
                }
            }
            "collect" => {
                p.allow(&["sort"])?;
                Transform::Collect { sort: p.sort("sort")? }
            }
            "extent" => {
                p.allow(&["field", "signal"])?;
                Transform::Extent {
                    field: p.field("field")?,
                    signal: p.string("signal")?,
                }
            }
            "stack" => {
                p.allow(&["field", "groupby", "sort", "offset", "as"])?;
                let offset = match p.string("offset")?.as_deref() {
                    None | Some("zero") => StackOffset::Zero,
                    Some("center") => StackOffset::Center,
                    Some("normalize") => StackOffset::Normalize,
                    Some(other) => return Err(p.bad(format!("unknown offset `{other}`"))),
                };
                Transform::Stack {
                    field: p.field("field")?,
                    groupby: p.fields("groupby")?,
                    sort: p.sort("sort")?,
                    offset,
                    as_: p.pair("as", ["y0", "y1"])?,
                }
            }
            other => return Err(TransformError::Unsupported(other.to_string())),
        };
        Ok(t)
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Transform::Filter { .. } => "filter",
            Transform::Formula { .. } => "formula",
            Transform::Bin { .. } => "bin",
            Transform::TimeUnit { .. } => "timeunit",
            Transform::Aggregate { .. } => "aggregate",
            Transform::JoinAggregate { .. } => "joinaggregate",
            Transform::Window { .. } => "window",
            Transform::Collect { .. } => "collect",
            Transform::Extent { .. } => "extent",
            Transform::Stack { .. } => "stack",
        }
    }

    /// Expressions embedded in the parameters.
    pub fn expressions(&self) -> Vec<&Expr> {
        match self {
            Transform::Filter { expr } | Transform::Formula { expr, .. } => vec![expr],
            Transform::Bin {
                extent: ExtentSource::Signal(expr),
                ..
            } => vec![expr],
            _ => Vec::new(),
        }
    }

    /// Signals read by this transform.
    pub fn signal_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for e in self.expressions() {
            out.extend(analyze(e).signals);
        }
        out
    }

    /// Signal written by this transform, if any.
    pub fn output_signal(&self) -> Option<&str> {
        match self {
            Transform::Extent { signal, .. } => signal.as_deref(),
            _ => None,
        }
    }

    /// Whether the server can run this transform: its type is in
    /// [`SERVER_TRANSFORMS`] and every embedded expression is supported.
    pub fn server_supported(&self) -> bool {
        SERVER_TRANSFORMS.contains(&self.op_name())
            && self.expressions().into_iter().all(is_supported)
    }

    /// Apply to `table`. Signal-writing transforms update `signals`.
    pub fn apply(&self, table: &Table, signals: &mut SignalValues) -> Result<Table, TransformError> {
        match self {
            Transform::Filter { expr } => transform_filter(table, expr, signals),
            Transform::Formula { expr, as_ } => transform_formula(table, expr, as_, signals),
            Transform::Bin {
                field,
                extent,
                maxbins,
                as_,
            } => {
                let (lo, hi) = match extent {
                    ExtentSource::Literal(lo, hi) => (*lo, *hi),
                    ExtentSource::Signal(expr) => resolve_extent(expr, signals)?,
                };
                let params = nice_bin_params(lo, hi, *maxbins)?;
                transform_bin(table, field, &params, as_)
            }
            Transform::TimeUnit { field, unit, as_ } => transform_timeunit(table, field, *unit, as_),
            Transform::Aggregate { groupby, ops } => transform_aggregate(table, groupby, ops),
            Transform::JoinAggregate { groupby, ops } => transform_joinaggregate(table, groupby, ops),
            Transform::Window { groupby, sort, ops } => transform_window(table, groupby, sort, ops),
            Transform::Collect { sort } => transform_collect(table, sort),
            Transform::Extent { field, signal } => {
                let extent = transform_extent(table, field)?;
                if let Some(name) = signal {
                    signals.insert(name.clone(), extent);
                }
                Ok(table.clone())
            }
            Transform::Stack {
                field,
                groupby,
                sort,
                offset,
                as_,
            } => transform_stack(table, field, groupby, sort, *offset, as_),
        }
    }
}

fn resolve_extent(expr: &Expr, signals: &SignalValues) -> Result<(f64, f64), TransformError> {
    let value = crate::expr::evaluate(expr, &crate::expr::NoDatum, signals)?;
    let bad = || EvalError::TypeError(format!("bin extent must be a two-element list, got {value}"));
    match value.as_list() {
        Some([lo, hi]) => match (lo.as_f64(), hi.as_f64()) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            _ => Err(TransformError::DegenerateExtent {
                lo: lo.as_f64().unwrap_or(f64::NAN),
                hi: hi.as_f64().unwrap_or(f64::NAN),
            }),
        },
        _ => Err(bad().into()),
    }
}

/// Apply a list of transforms in order.
pub fn apply_all(
    transforms: &[Transform],
    table: &Table,
    signals: &mut SignalValues,
) -> Result<Table, TransformError> {
    let mut current = table.clone();
    for t in transforms {
        current = t.apply(&current, signals)?;
    }
    Ok(current)
}
