//! Splits a spec into a client spec, a server spec, and the communication
//! plan between them.
//!
//! Each dataset's longest server-executable transform prefix moves to the
//! server. The client keeps a placeholder dataset that receives the prefix
//! result and runs the remaining suffix.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value as Json};

use crate::expr::{analyze, is_supported, SignalValues};
use crate::spec::{
    dependency_graph, DataFormat, DataSource, DatasetDef, NodeId, SpecError, TransformSpec, VisSpec,
};
use crate::transform::SERVER_TRANSFORMS;
use crate::value::Value;

/// Reserved client dataset property naming the export that fills it.
pub const EXPORT_KEY: &str = "__sf_export";

pub fn export_name(dataset: &str, k: usize) -> String {
    format!("__sf_{dataset}_{k}")
}

/// True iff the step may run on the server: its type is supported, all its
/// expression parameters parsed and are supported, and its parameters are
/// ones the engine implements.
pub fn step_supported(step: &TransformSpec) -> bool {
    SERVER_TRANSFORMS.contains(&step.op.as_str())
        && !step.has_unparsed()
        && step.exprs.iter().all(|p| p.ast.as_ref().is_some_and(is_supported))
        && step.typed().is_ok_and(|t| t.server_supported())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerSource {
    Url { url: String, format: DataFormat },
    Inline(Json),
    /// The full result of another server dataset.
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerDataset {
    pub name: String,
    pub export: String,
    pub source: ServerSource,
    pub transforms: Vec<TransformSpec>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServerSpec {
    pub datasets: Vec<ServerDataset>,
    /// Initial values of the client signals the server steps read.
    pub signals: BTreeMap<String, Value>,
}

impl ServerSpec {
    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn dataset(&self, name: &str) -> Option<&ServerDataset> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn by_export(&self, export: &str) -> Option<&ServerDataset> {
        self.datasets.iter().find(|d| d.export == export)
    }

    pub fn to_json(&self) -> Json {
        let datasets: Vec<Json> = self
            .datasets
            .iter()
            .map(|d| {
                let source = match &d.source {
                    ServerSource::Url { url, format } => json!({"url": url, "format": format.name()}),
                    ServerSource::Inline(values) => json!({"values": values}),
                    ServerSource::Dataset(name) => json!({"dataset": name}),
                };
                json!({
                    "name": d.name,
                    "export": d.export,
                    "source": source,
                    "transform": d.transforms.iter().map(TransformSpec::to_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        let signals: Map<String, Json> = self
            .signals
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        json!({"datasets": datasets, "signals": signals})
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommunicationPlan {
    pub client_to_server: Vec<String>,
    pub server_to_client: Vec<String>,
}

impl CommunicationPlan {
    pub fn to_json(&self) -> Json {
        json!({
            "client_to_server": self.client_to_server,
            "server_to_client": self.server_to_client,
        })
    }
}

/// Why a dataset's server prefix ends where it does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitReason {
    /// The whole chain runs on the server.
    Complete,
    /// The next step is not server-executable.
    UnsupportedStep,
    /// The next step reads a signal the server cannot obtain.
    SignalUnavailable(String),
    /// The next step is an `extent` whose signal the client also reads.
    ExtentNeededByClient(String),
    /// The source cannot be loaded by the server.
    IneligibleSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub dataset: String,
    /// Number of transforms assigned to the server.
    pub server_steps: usize,
    pub total_steps: usize,
    /// Whether the dataset has any server-side part.
    pub on_server: bool,
    pub reason: SplitReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub client_spec: VisSpec,
    pub server_spec: ServerSpec,
    pub comm_plan: CommunicationPlan,
    pub splits: Vec<Split>,
}

/// Client signals whose value the server can receive: declared, with a
/// JSON-representable value, and (when computed) from supported expressions
/// over other such signals.
fn transferable_signals(spec: &VisSpec) -> BTreeSet<String> {
    let mut ok = BTreeSet::new();
    let mut changed = true;
    while changed {
        changed = false;
        for s in &spec.signals {
            if ok.contains(&s.name) || s.initial_opaque {
                continue;
            }
            let good = match (&s.update_expr, s.interactive) {
                (None, _) | (Some(_), true) => true,
                (Some(p), false) => p.ast.as_ref().is_some_and(|ast| {
                    let refs = analyze(ast);
                    is_supported(ast) && refs.datasets.is_empty() && refs.signals.iter().all(|r| ok.contains(r))
                }),
            };
            if good {
                ok.insert(s.name.clone());
                changed = true;
            }
        }
    }
    ok
}

fn source_order(spec: &VisSpec) -> Result<Vec<&DatasetDef>, SpecError> {
    let graph = dependency_graph(spec)?;
    Ok(graph
        .topological_order()?
        .into_iter()
        .filter_map(|n| match n {
            NodeId::Step { dataset, index: 0 } => spec.dataset(&dataset),
            _ => None,
        })
        .collect())
}

struct Assignment {
    /// dataset → (server steps, reason), for datasets with a server part.
    server: BTreeMap<String, (usize, SplitReason)>,
    reasons: BTreeMap<String, SplitReason>,
}

fn assign(
    spec: &VisSpec,
    order: &[&DatasetDef],
    caps: &BTreeMap<String, (usize, SplitReason)>,
    transferable: &BTreeSet<String>,
) -> Assignment {
    let mut server: BTreeMap<String, (usize, SplitReason)> = BTreeMap::new();
    let mut reasons = BTreeMap::new();
    for d in order {
        let eligible = d.extra.keys().all(|k| k == "format")
            && match &d.source {
                DataSource::Url { format, .. } => *format != DataFormat::Unsupported,
                DataSource::Inline(values) => crate::table::ingest_json_value(values).is_ok(),
                DataSource::Named(src) => server
                    .get(src)
                    .is_some_and(|(k, _)| *k == spec.dataset(src).map_or(usize::MAX, |s| s.transforms.len())),
                _ => false,
            };
        if !eligible {
            reasons.insert(d.name.clone(), SplitReason::IneligibleSource);
            continue;
        }
        let (cap, cap_reason) = caps
            .get(&d.name)
            .cloned()
            .unwrap_or((d.transforms.len(), SplitReason::Complete));
        let mut derived: BTreeSet<&str> = BTreeSet::new();
        let mut k = 0;
        let mut reason = SplitReason::Complete;
        for t in &d.transforms {
            if k == cap {
                reason = cap_reason.clone();
                break;
            }
            if !step_supported(t) {
                reason = SplitReason::UnsupportedStep;
                break;
            }
            let missing = t
                .refs()
                .signals
                .into_iter()
                .find(|s| !transferable.contains(s) && !derived.contains(s.as_str()));
            if let Some(s) = missing {
                reason = SplitReason::SignalUnavailable(s);
                break;
            }
            if let Some(out) = t.output_signal() {
                derived.insert(out);
            }
            k += 1;
        }
        if k > 0 || d.transforms.is_empty() {
            server.insert(d.name.clone(), (k, reason.clone()));
        }
        reasons.insert(d.name.clone(), reason);
    }
    Assignment { server, reasons }
}

/// Signals read anywhere except by the steps in `segment`.
fn signal_reads_outside(spec: &VisSpec, segment: (&str, usize, usize)) -> BTreeSet<String> {
    let (dataset, from, to) = segment;
    let mut out = spec.remainder_refs().signals;
    for s in &spec.signals {
        out.extend(s.refs().signals);
    }
    for d in &spec.datasets {
        for (i, t) in d.transforms.iter().enumerate() {
            let step = i + 1;
            if d.name == dataset && step > from && step <= to {
                continue;
            }
            out.extend(t.refs().signals);
        }
    }
    out
}

/// Datasets whose complete value the client reads directly.
fn client_consumed(client: &VisSpec, server_only: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = client.remainder_refs().datasets;
    for s in &client.signals {
        out.extend(s.refs().datasets);
    }
    for d in &client.datasets {
        if server_only.contains(&d.name) {
            continue;
        }
        if let DataSource::Named(src) = &d.source {
            out.insert(src.clone());
        }
        for t in &d.transforms {
            out.extend(t.refs().datasets);
        }
    }
    out
}

pub fn plan(spec: &VisSpec) -> Result<PlanResult, SpecError> {
    let order = source_order(spec)?;
    let transferable = transferable_signals(spec);

    // shrink prefixes until no extent signal computed on the server is read
    // outside its own server segment
    let mut caps: BTreeMap<String, (usize, SplitReason)> = BTreeMap::new();
    let assignment = loop {
        let a = assign(spec, &order, &caps, &transferable);
        let mut changed = false;
        for (name, (k, _)) in &a.server {
            let d = spec.dataset(name).expect("assigned datasets exist");
            for (i, t) in d.transforms[..*k].iter().enumerate() {
                let Some(sig) = t.output_signal() else { continue };
                if signal_reads_outside(spec, (name, i + 1, *k)).contains(sig) {
                    caps.insert(name.clone(), (i, SplitReason::ExtentNeededByClient(sig.to_string())));
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            break a;
        }
    };

    // zero-transform datasets only move when a server dataset reads them
    let mut server = assignment.server;
    let needed: BTreeSet<String> = spec
        .datasets
        .iter()
        .filter(|d| server.contains_key(&d.name))
        .filter_map(|d| match &d.source {
            DataSource::Named(src) => Some(src.clone()),
            _ => None,
        })
        .collect();
    server.retain(|name, (k, _)| *k > 0 || needed.contains(name));

    let mut server_spec = ServerSpec::default();
    let mut client_spec = spec.clone();
    let mut splits = Vec::new();
    let mut partial = BTreeSet::new();
    let mut full = BTreeSet::new();
    for d in &spec.datasets {
        let (k, reason) = match server.get(&d.name) {
            Some((k, reason)) => (*k, reason.clone()),
            None => (0, assignment.reasons.get(&d.name).cloned().unwrap_or(SplitReason::IneligibleSource)),
        };
        let on_server = server.contains_key(&d.name);
        splits.push(Split {
            dataset: d.name.clone(),
            server_steps: k,
            total_steps: d.transforms.len(),
            on_server,
            reason,
        });
        if !on_server {
            continue;
        }
        let source = match &d.source {
            DataSource::Url { url, format } => ServerSource::Url {
                url: url.clone(),
                format: *format,
            },
            DataSource::Inline(values) => ServerSource::Inline(values.clone()),
            DataSource::Named(src) => ServerSource::Dataset(src.clone()),
            _ => unreachable!("ineligible sources are never assigned"),
        };
        server_spec.datasets.push(ServerDataset {
            name: d.name.clone(),
            export: export_name(&d.name, k),
            source,
            transforms: d.transforms[..k].to_vec(),
        });
        if k < d.transforms.len() {
            partial.insert(d.name.clone());
        } else {
            full.insert(d.name.clone());
        }
    }

    // rewrite server datasets into placeholders, then decide which exports
    // the client actually reads
    for cd in &mut client_spec.datasets {
        let Some(sd) = server_spec.dataset(&cd.name) else { continue };
        let k = sd.transforms.len();
        cd.source = DataSource::Inline(Json::Array(Vec::new()));
        cd.transforms = cd.transforms[k..].to_vec();
        cd.extra.remove("format");
    }
    let consumed = client_consumed(&client_spec, &full);
    let exported: BTreeSet<String> = partial
        .iter()
        .cloned()
        .chain(full.iter().filter(|n| consumed.contains(*n)).cloned())
        .collect();
    for cd in &mut client_spec.datasets {
        if exported.contains(&cd.name) {
            let sd = server_spec.dataset(&cd.name).expect("exported datasets are on the server");
            cd.extra.insert(EXPORT_KEY.into(), Json::String(sd.export.clone()));
        }
    }

    let mut read: BTreeSet<String> = BTreeSet::new();
    for sd in &server_spec.datasets {
        for t in &sd.transforms {
            read.extend(t.refs().signals);
        }
    }
    let client_to_server: Vec<String> = read
        .into_iter()
        .filter(|s| spec.signal(s).is_some())
        .collect();
    let initial: SignalValues = spec.initial_signal_values();
    server_spec.signals = client_to_server
        .iter()
        .map(|s| (s.clone(), initial.get(s).cloned().unwrap_or(Value::Null)))
        .collect();
    let server_to_client = server_spec
        .datasets
        .iter()
        .filter(|d| exported.contains(&d.name))
        .map(|d| d.export.clone())
        .collect();

    Ok(PlanResult {
        client_spec,
        server_spec,
        comm_plan: CommunicationPlan {
            client_to_server,
            server_to_client,
        },
        splits,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanReport {
    pub splits: Vec<Split>,
    pub violations: Vec<String>,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check the invariants of a plan against its source spec.
pub fn validate_plan(spec: &VisSpec, plan: &PlanResult) -> PlanReport {
    let mut violations = Vec::new();
    let server_read: BTreeSet<String> = plan
        .server_spec
        .datasets
        .iter()
        .flat_map(|d| d.transforms.iter().flat_map(|t| t.refs().signals))
        .collect();

    for sd in &plan.server_spec.datasets {
        let Some(orig) = spec.dataset(&sd.name) else {
            violations.push(format!("server dataset `{}` is not in the spec", sd.name));
            continue;
        };
        for t in &sd.transforms {
            if !step_supported(t) {
                violations.push(format!("unsupported op in server spec: `{}` in `{}`", t.op, sd.name));
            }
        }
        let k = sd.transforms.len();
        if k > orig.transforms.len() || orig.transforms[..k] != sd.transforms[..] {
            violations.push(format!("server steps of `{}` are not a prefix of its chain", sd.name));
        }
        if sd.export != export_name(&sd.name, k) {
            violations.push(format!("export of `{}` is misnamed `{}`", sd.name, sd.export));
        }
        match plan.client_spec.dataset(&sd.name) {
            Some(cd) if k <= orig.transforms.len() && cd.transforms[..] == orig.transforms[k..] => {}
            _ => violations.push(format!("client placeholder of `{}` does not hold the suffix", sd.name)),
        }
        if let ServerSource::Dataset(src) = &sd.source {
            let complete = plan.server_spec.dataset(src).is_some_and(|u| {
                spec.dataset(src).is_some_and(|o| o.transforms.len() == u.transforms.len())
            });
            if !complete {
                violations.push(format!("`{}` reads `{src}`, which is not entirely on the server", sd.name));
            }
        }
    }
    for s in &plan.comm_plan.client_to_server {
        if !server_read.contains(s) {
            violations.push(format!("signal `{s}` is sent but no server step reads it"));
        }
    }
    let placeholders: BTreeSet<String> = plan
        .client_spec
        .datasets
        .iter()
        .filter_map(|d| d.extra.get(EXPORT_KEY).and_then(Json::as_str).map(str::to_string))
        .collect();
    let delivered: BTreeSet<String> = plan.comm_plan.server_to_client.iter().cloned().collect();
    if placeholders != delivered {
        violations.push(format!(
            "delivered exports {delivered:?} differ from client placeholders {placeholders:?}"
        ));
    }
    for split in &plan.splits {
        if split.reason != SplitReason::UnsupportedStep {
            continue;
        }
        let next = spec
            .dataset(&split.dataset)
            .and_then(|d| d.transforms.get(split.server_steps));
        if next.is_some_and(step_supported) {
            violations.push(format!("supported step left on the client in `{}`", split.dataset));
        }
    }
    PlanReport {
        splits: plan.splits.clone(),
        violations,
    }
}
