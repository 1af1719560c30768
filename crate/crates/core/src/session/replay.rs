//! Trace replay against a runtime endpoint, and parity checking against the
//! oracle.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::compare::{table_diff, FLOAT_RTOL};
use super::oracle::{evaluate_spec, evaluate_spec_with, OracleError};
use super::{Session, SessionError};
use crate::planner::{plan, PlanResult};
use crate::runtime::{Endpoint, EndpointError, Loader, Query, QueryResult};
use crate::spec::{SpecError, VisSpec};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: f64,
    pub signal: String,
    pub value: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Parse a trace file: a JSON list of `{"t_ms","signal","value"}`.
pub fn parse_trace(bytes: &[u8]) -> Result<Vec<TraceEvent>, ReplayError> {
    let events: Vec<TraceEvent> = serde_json::from_slice(bytes).map_err(|e| ReplayError::Trace(e.to_string()))?;
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(ReplayError::Trace(format!("event {} goes back in time", i + 1)));
        }
    }
    if let Some(e) = events.iter().find(|e| !(e.t_ms >= 0.0)) {
        return Err(ReplayError::Trace(format!("negative t_ms {}", e.t_ms)));
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayOptions {
    /// Wait until each event's timestamp before sending it.
    pub realtime: bool,
}

/// One query round trip, or a signal change that needed none.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundTrip {
    /// Trace index; `None` for the initial render.
    pub event: Option<usize>,
    pub requested: Vec<String>,
    pub delivered: Vec<String>,
    pub bytes: usize,
    pub computed: Vec<String>,
    pub hits: Vec<String>,
    pub latency_ms: f64,
}

impl RoundTrip {
    pub fn to_json(&self) -> Json {
        json!({
            "event": self.event,
            "requested": self.requested,
            "delivered": self.delivered,
            "bytes": self.bytes,
            "computed": self.computed,
            "hits": self.hits,
            "latency_ms": self.latency_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub initial: RoundTrip,
    pub events: Vec<RoundTrip>,
}

impl ReplayReport {
    pub fn total_bytes(&self) -> usize {
        self.initial.bytes + self.events.iter().map(|e| e.bytes).sum::<usize>()
    }

    pub fn to_json(&self) -> Json {
        json!({
            "initial": self.initial.to_json(),
            "events": self.events.iter().map(RoundTrip::to_json).collect::<Vec<_>>(),
            "total_bytes": self.total_bytes(),
        })
    }
}

fn round_trip(
    session: &mut Session,
    query: Option<Query>,
    endpoint: &dyn Endpoint,
    event: Option<usize>,
) -> Result<RoundTrip, ReplayError> {
    let mut trip = RoundTrip {
        event,
        ..RoundTrip::default()
    };
    let Some(query) = query else {
        return Ok(trip);
    };
    trip.requested = session.outstanding_exports();
    let start = Instant::now();
    let result: QueryResult = endpoint.query(&query)?;
    trip.latency_ms = start.elapsed().as_secs_f64() * 1000.0;
    let updates = session.apply_response(&result)?;
    trip.delivered = updates.into_iter().map(|(e, _)| e).collect();
    trip.bytes = result.stats.bytes;
    trip.computed = result.stats.computed.iter().map(|f| f.to_hex()).collect();
    trip.hits = result.stats.hits.iter().map(|f| f.to_hex()).collect();
    Ok(trip)
}

/// Drive a session through `trace` and record every round trip. Calls
/// `after_event` with the session after the initial render (index `None`)
/// and after each event.
fn drive(
    plan: PlanResult,
    trace: &[TraceEvent],
    endpoint: &dyn Endpoint,
    options: ReplayOptions,
    mut after_event: impl FnMut(Option<usize>, &Session) -> Result<(), ReplayError>,
) -> Result<(ReplayReport, Session), ReplayError> {
    let (mut session, query) = Session::open(plan)?;
    let mut report = ReplayReport {
        initial: round_trip(&mut session, Some(query), endpoint, None)?,
        events: Vec::with_capacity(trace.len()),
    };
    after_event(None, &session)?;
    let start = Instant::now();
    for (i, event) in trace.iter().enumerate() {
        if options.realtime {
            let due = Duration::from_secs_f64(event.t_ms / 1000.0);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let query = session.set_signal(&event.signal, event.value.clone())?;
        report.events.push(round_trip(&mut session, query, endpoint, Some(i))?);
        after_event(Some(i), &session)?;
    }
    Ok((report, session))
}

pub fn replay(
    spec: &VisSpec,
    trace: &[TraceEvent],
    endpoint: &dyn Endpoint,
    options: ReplayOptions,
) -> Result<(ReplayReport, Session), ReplayError> {
    drive(plan(spec)?, trace, endpoint, options, |_, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// Number of trace events applied.
    pub prefix: usize,
    pub dataset: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub prefixes: usize,
    pub datasets: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compare the mark-consumed datasets of `spec` under `plan` (runtime plus
/// session plus client-side evaluation) with the oracle, after every
/// prefix of `trace`.
pub fn check_plan(
    spec: &VisSpec,
    plan: PlanResult,
    trace: &[TraceEvent],
    endpoint: &dyn Endpoint,
    loader: &Loader,
) -> Result<CheckReport, ReplayError> {
    let consumed: Vec<String> = spec
        .remainder_refs()
        .datasets
        .into_iter()
        .filter(|d| spec.dataset(d).is_some())
        .collect();
    let mut report = CheckReport {
        datasets: consumed.clone(),
        ..CheckReport::default()
    };
    let client_spec = plan.client_spec.clone();
    drive(plan, trace, endpoint, ReplayOptions::default(), |event, session| {
        let prefix = event.map_or(0, |i| i + 1);
        let expected = evaluate_spec(spec, &session.signal_values, loader)?;
        let actual = evaluate_spec_with(&client_spec, &session.signal_values, loader, &session.placeholder_tables())?;
        for d in &consumed {
            let detail = match (expected.get(d), actual.get(d)) {
                (Some(e), Some(a)) => table_diff(e, a, FLOAT_RTOL),
                (_, None) => Some("missing on the client".to_string()),
                (None, _) => Some("missing in the oracle".to_string()),
            };
            if let Some(detail) = detail {
                report.mismatches.push(Mismatch {
                    prefix,
                    dataset: d.clone(),
                    detail,
                });
            }
        }
        report.prefixes += 1;
        Ok(())
    })?;
    Ok(report)
}

pub fn check(
    spec: &VisSpec,
    trace: &[TraceEvent],
    endpoint: &dyn Endpoint,
    loader: &Loader,
) -> Result<CheckReport, ReplayError> {
    check_plan(spec, plan(spec)?, trace, endpoint, loader)
}
