//! Per-visualization client state: signal values, delivered datasets, and
//! the minimal queries that keep them current.

mod compare;
mod oracle;
mod replay;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::expr::SignalValues;
use crate::planner::PlanResult;
use crate::runtime::{lower, Fingerprint, GraphError, Lowered, Query, QueryResult};
use crate::table::Table;
use crate::value::Value;

pub use compare::{canonical_row_order, canonicalize, floats_close, table_diff, values_close, FLOAT_RTOL};
pub use oracle::{evaluate_spec, evaluate_spec_with, OracleError};
pub use replay::{
    check, check_plan, parse_trace, replay, CheckReport, Mismatch, ReplayError, ReplayOptions, ReplayReport,
    RoundTrip, TraceEvent,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("unexpected response: {0}")]
    UnexpectedResponse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
struct Outstanding {
    /// (export, node id in the query, fingerprint)
    exports: Vec<(String, usize, Fingerprint)>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub plan: PlanResult,
    pub signal_values: SignalValues,
    /// Fingerprint of the value last delivered for each export.
    pub last_fp: BTreeMap<String, Fingerprint>,
    pub client_datasets: BTreeMap<String, Arc<Table>>,
    /// Fingerprint each export has under the current signal values.
    current_fp: BTreeMap<String, Fingerprint>,
    outstanding: Option<Outstanding>,
}

impl Session {
    /// Start a session at the initial signal values. The returned query
    /// requests every export.
    pub fn open(plan: PlanResult) -> Result<(Session, Query), SessionError> {
        let signal_values = plan.client_spec.initial_signal_values();
        let mut session = Session {
            plan,
            signal_values,
            last_fp: BTreeMap::new(),
            client_datasets: BTreeMap::new(),
            current_fp: BTreeMap::new(),
            outstanding: None,
        };
        let lowered = session.lower()?;
        let query = session.request(&lowered, &session.plan.comm_plan.server_to_client.clone());
        Ok((session, query))
    }

    fn lower(&mut self) -> Result<Lowered, SessionError> {
        let exports = &self.plan.comm_plan.server_to_client;
        let lowered = lower(&self.plan.server_spec, &self.signal_values, exports)?;
        self.current_fp = exports
            .iter()
            .filter_map(|e| lowered.export_fingerprint(e).map(|fp| (e.clone(), fp)))
            .collect();
        Ok(lowered)
    }

    fn request(&mut self, lowered: &Lowered, exports: &[String]) -> Query {
        let query = lowered.query_for(exports);
        let ids = &query.requested;
        self.outstanding = Some(Outstanding {
            exports: exports
                .iter()
                .zip(ids)
                .map(|(e, &id)| (e.clone(), id, self.current_fp[e]))
                .collect(),
        });
        query
    }

    /// The values of the signals the server reads.
    fn server_signals(&self) -> Vec<Value> {
        self.plan
            .comm_plan
            .client_to_server
            .iter()
            .map(|s| self.signal_values.get(s).cloned().unwrap_or_default())
            .collect()
    }

    /// Update a signal. Returns the query for the exports whose
    /// fingerprints changed, or `None` when nothing needs fetching. A new
    /// query supersedes any outstanding one.
    pub fn set_signal(&mut self, name: &str, value: Value) -> Result<Option<Query>, SessionError> {
        if self.plan.client_spec.signal(name).is_none() {
            return Err(SessionError::UnknownSignal(name.to_string()));
        }
        let before = self.server_signals();
        self.signal_values.insert(name.to_string(), value);
        self.plan.client_spec.refresh_update_signals(&mut self.signal_values);
        if self.server_signals() == before {
            return Ok(None);
        }
        let lowered = self.lower()?;
        let changed: Vec<String> = self
            .plan
            .comm_plan
            .server_to_client
            .iter()
            .filter(|e| self.last_fp.get(*e) != self.current_fp.get(*e))
            .cloned()
            .collect();
        if changed.is_empty() {
            self.outstanding = None;
            return Ok(None);
        }
        Ok(Some(self.request(&lowered, &changed)))
    }

    /// Store the delivered values that are still current. Returns the
    /// updates in export order; values for superseded signal states are
    /// dropped.
    pub fn apply_response(&mut self, result: &QueryResult) -> Result<Vec<(String, Arc<Table>)>, SessionError> {
        let Some(outstanding) = self.outstanding.take() else {
            if result.values.is_empty() {
                return Ok(Vec::new());
            }
            return Err(SessionError::UnexpectedResponse("no query is outstanding".into()));
        };
        let expected: BTreeSet<usize> = outstanding.exports.iter().map(|(_, id, _)| *id).collect();
        let got: BTreeSet<usize> = result.values.keys().copied().collect();
        if expected != got {
            self.outstanding = Some(outstanding);
            return Err(SessionError::UnexpectedResponse(format!(
                "expected values for nodes {expected:?}, got {got:?}"
            )));
        }
        let mut updates = Vec::new();
        for (export, id, fp) in outstanding.exports {
            if result.fingerprints.get(&id).is_some_and(|f| *f != fp) {
                return Err(SessionError::UnexpectedResponse(format!("fingerprint mismatch for `{export}`")));
            }
            if self.current_fp.get(&export) != Some(&fp) {
                continue;
            }
            let Some(table) = result.values[&id].as_table() else {
                return Err(SessionError::UnexpectedResponse(format!("`{export}` is not a table")));
            };
            self.last_fp.insert(export.clone(), fp);
            self.client_datasets.insert(export.clone(), Arc::clone(table));
            updates.push((export, Arc::clone(table)));
        }
        let order = &self.plan.comm_plan.server_to_client;
        updates.sort_by_key(|(e, _)| order.iter().position(|o| o == e));
        Ok(updates)
    }

    /// Client dataset name → delivered table, for the placeholders filled so
    /// far.
    pub fn placeholder_tables(&self) -> BTreeMap<String, Arc<Table>> {
        self.plan
            .client_spec
            .datasets
            .iter()
            .filter_map(|d| {
                let export = d.extra.get(crate::planner::EXPORT_KEY)?.as_str()?;
                Some((d.name.clone(), Arc::clone(self.client_datasets.get(export)?)))
            })
            .collect()
    }

    /// Exports requested by the outstanding query.
    pub fn outstanding_exports(&self) -> Vec<String> {
        self.outstanding
            .as_ref()
            .map(|o| o.exports.iter().map(|(e, _, _)| e.clone()).collect())
            .unwrap_or_default()
    }

    pub fn has_outstanding(&self) -> bool {
        self.outstanding.is_some()
    }

    /// Accept a response for a query other than the latest one. Values are
    /// kept only when their fingerprint is current, so an old response can
    /// never replace a newer value.
    pub fn apply_late(&mut self, query: &Query, result: &QueryResult) -> Vec<(String, Arc<Table>)> {
        let mut updates = Vec::new();
        for &id in &query.requested {
            let (Some(fp), Some(value)) = (result.fingerprints.get(&id), result.values.get(&id)) else {
                continue;
            };
            let Some(export) = self.current_fp.iter().find(|(_, f)| *f == fp).map(|(e, _)| e.clone()) else {
                continue;
            };
            if self.last_fp.get(&export) == Some(fp) {
                continue;
            }
            if let Some(table) = value.as_table() {
                self.last_fp.insert(export.clone(), *fp);
                self.client_datasets.insert(export.clone(), Arc::clone(table));
                updates.push((export, Arc::clone(table)));
            }
        }
        updates
    }
}
