//! Direct evaluation of a whole spec: no planning, fingerprints, cache or
//! wire format.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::expr::{evaluate, NoDatum, SignalValues};
use crate::runtime::{LoadError, Loader};
use crate::spec::{dependency_graph, DataSource, NodeId, SpecError, VisSpec};
use crate::table::{ingest_json_value, Table, TableError};
use crate::transform::TransformError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("dataset `{dataset}`: {what} cannot be evaluated")]
    UnsupportedForOracle { dataset: String, what: String },
    #[error("dataset `{dataset}` step {step}: {cause}")]
    Transform {
        dataset: String,
        step: usize,
        cause: TransformError,
    },
    #[error("dataset `{dataset}`: {cause}")]
    Inline { dataset: String, cause: TableError },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Evaluate every dataset of `spec` in dependency order.
///
/// `overrides` replaces the source of the named datasets with a given
/// table; the session uses it to evaluate a client spec whose placeholder
/// datasets were filled by the runtime.
pub fn evaluate_spec_with(
    spec: &VisSpec,
    signals: &SignalValues,
    loader: &Loader,
    overrides: &BTreeMap<String, Arc<Table>>,
) -> Result<BTreeMap<String, Arc<Table>>, OracleError> {
    let graph = dependency_graph(spec)?;
    let mut env = signals.clone();
    let mut current: BTreeMap<String, Table> = BTreeMap::new();
    let mut done: BTreeMap<String, Arc<Table>> = BTreeMap::new();

    for node in graph.topological_order()? {
        match node {
            NodeId::Signal(name) => {
                let Some(def) = spec.signal(&name) else {
                    continue;
                };
                if def.interactive {
                    continue;
                }
                if let Some(ast) = def.update_expr.as_ref().and_then(|p| p.ast.as_ref()) {
                    if let Ok(v) = evaluate(ast, &NoDatum, &env) {
                        env.insert(name, v);
                    }
                }
            }
            NodeId::Step { dataset, index } => {
                let d = spec.dataset(&dataset).expect("graph nodes name datasets");
                let table = if index == 0 {
                    match overrides.get(&dataset) {
                        Some(t) => (**t).clone(),
                        None => load_source(&dataset, &d.source, d.extra.get("format"), loader)?
                            .unwrap_or_else(|| (*done[source_name(&d.source)]).clone()),
                    }
                } else {
                    let step = &d.transforms[index - 1];
                    let input = current.remove(&dataset).expect("steps run in order");
                    if step.has_unparsed() {
                        return Err(OracleError::UnsupportedForOracle {
                            dataset,
                            what: format!("step {index} (`{}` with an unparsable expression)", step.op),
                        });
                    }
                    let t = step.typed().map_err(|e| OracleError::UnsupportedForOracle {
                        dataset: dataset.clone(),
                        what: format!("step {index} (`{}`: {e})", step.op),
                    })?;
                    t.apply(&input, &mut env).map_err(|cause| OracleError::Transform {
                        dataset: dataset.clone(),
                        step: index,
                        cause,
                    })?
                };
                if index == d.transforms.len() {
                    done.insert(dataset, Arc::new(table));
                } else {
                    current.insert(dataset, table);
                }
            }
        }
    }
    Ok(done)
}

pub fn evaluate_spec(
    spec: &VisSpec,
    signals: &SignalValues,
    loader: &Loader,
) -> Result<BTreeMap<String, Arc<Table>>, OracleError> {
    evaluate_spec_with(spec, signals, loader, &BTreeMap::new())
}

fn source_name(source: &DataSource) -> &str {
    match source {
        DataSource::Named(name) => name,
        _ => unreachable!("only named sources defer to other datasets"),
    }
}

/// The table for a non-named source, or `None` for a named one.
fn load_source(
    dataset: &str,
    source: &DataSource,
    format: Option<&serde_json::Value>,
    loader: &Loader,
) -> Result<Option<Table>, OracleError> {
    let unsupported = |what: &str| OracleError::UnsupportedForOracle {
        dataset: dataset.to_string(),
        what: what.to_string(),
    };
    match source {
        DataSource::Url { url, format: f } => match f {
            crate::spec::DataFormat::Unsupported => Err(unsupported(&format!("format {}", format.map(|f| f.to_string()).unwrap_or_default()))),
            _ => Ok(Some(loader.load(url, *f)?)),
        },
        DataSource::Inline(values) => ingest_json_value(values)
            .map(Some)
            .map_err(|cause| OracleError::Inline {
                dataset: dataset.to_string(),
                cause,
            }),
        DataSource::Named(_) => Ok(None),
        DataSource::Other { key, .. } => Err(unsupported(&format!("source `{key}`"))),
        DataSource::None => Ok(Some(Table::empty())),
    }
}
