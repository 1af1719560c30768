use std::collections::{BTreeMap, BTreeSet};

use super::{DataSource, SpecError, VisSpec};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    /// Output of the first `index` transforms of a dataset; 0 is the source.
    Step { dataset: String, index: usize },
    Signal(String),
}

impl NodeId {
    pub fn step(dataset: &str, index: usize) -> NodeId {
        NodeId::Step {
            dataset: dataset.to_string(),
            index,
        }
    }

    pub fn signal(name: &str) -> NodeId {
        NodeId::Signal(name.to_string())
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeId::Step { dataset, index } => write!(f, "{dataset}[{index}]"),
            NodeId::Signal(name) => write!(f, "signal {name}"),
        }
    }
}

/// Dataset-step and signal dependencies; edges run from dependency to
/// dependent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DepGraph {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

impl DepGraph {
    pub fn predecessors<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.edges.iter().filter(move |(_, to)| to == node).map(|(from, _)| from)
    }

    pub fn successors<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        self.edges.iter().filter(move |(from, _)| from == node).map(|(_, to)| to)
    }

    /// Kahn's algorithm, smallest ready node first.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, SpecError> {
        let mut indegree: BTreeMap<&NodeId, usize> = self.nodes.iter().map(|n| (n, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to).expect("edge endpoints are nodes") += 1;
        }
        let mut ready: BTreeSet<&NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(node) = ready.pop_first() {
            order.push(node.clone());
            for (from, to) in &self.edges {
                if from == node {
                    let d = indegree.get_mut(to).expect("edge endpoints are nodes");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert(to);
                    }
                }
            }
        }
        if order.len() < self.nodes.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(n, _)| n.to_string())
                .unwrap_or_default();
            return Err(SpecError::CyclicDependency(stuck));
        }
        Ok(order)
    }
}

pub fn dependency_graph(spec: &VisSpec) -> Result<DepGraph, SpecError> {
    let mut g = DepGraph::default();
    let signals = spec.signal_names();
    let last = |name: &str| {
        spec.dataset(name)
            .map(|d| NodeId::step(name, d.transforms.len()))
    };

    for name in &signals {
        g.nodes.insert(NodeId::signal(name));
    }
    for d in &spec.datasets {
        for k in 0..=d.transforms.len() {
            g.nodes.insert(NodeId::step(&d.name, k));
            if k > 0 {
                g.edges.insert((NodeId::step(&d.name, k - 1), NodeId::step(&d.name, k)));
            }
        }
        if let DataSource::Named(source) = &d.source {
            if let Some(from) = last(source) {
                g.edges.insert((from, NodeId::step(&d.name, 0)));
            }
        }
        for (i, t) in d.transforms.iter().enumerate() {
            let step = NodeId::step(&d.name, i + 1);
            let refs = t.refs();
            for s in refs.signals.iter().filter(|s| signals.contains(*s)) {
                g.edges.insert((NodeId::signal(s), step.clone()));
            }
            for ds in &refs.datasets {
                if let Some(from) = last(ds) {
                    g.edges.insert((from, step.clone()));
                }
            }
            if let Some(out) = t.output_signal() {
                g.edges.insert((step.clone(), NodeId::signal(out)));
            }
        }
    }
    for s in &spec.signals {
        let refs = s.refs();
        let node = NodeId::signal(&s.name);
        for dep in refs.signals.iter().filter(|d| signals.contains(*d)) {
            g.edges.insert((NodeId::signal(dep), node.clone()));
        }
        for ds in &refs.datasets {
            if let Some(from) = last(ds) {
                g.edges.insert((from, node.clone()));
            }
        }
    }
    g.topological_order()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn graph(doc: &str) -> Result<DepGraph, SpecError> {
        dependency_graph(&parse_spec(doc.as_bytes()).unwrap())
    }

    fn edges(g: &DepGraph) -> Vec<(String, String)> {
        g.edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn bin_extent_signal_edges() {
        let g = graph(
            r#"{"signals":[{"name":"s","value":[0,10]}],
                "data":[{"name":"d","url":"x.csv","format":{"type":"csv"},"transform":[
                  {"type":"bin","field":"x","extent":{"signal":"s"}},
                  {"type":"aggregate","groupby":["bin0"]}]}]}"#,
        )
        .unwrap();
        assert_eq!(
            edges(&g),
            vec![
                ("d[0]".to_string(), "d[1]".to_string()),
                ("d[1]".to_string(), "d[2]".to_string()),
                ("signal s".to_string(), "d[1]".to_string()),
            ]
        );
        assert_eq!(g.nodes.len(), 4);
    }

    #[test]
    fn lone_dataset() {
        let g = graph(r#"{"data":[{"name":"d","values":[]}]}"#).unwrap();
        assert_eq!(g.nodes.into_iter().collect::<Vec<_>>(), vec![NodeId::step("d", 0)]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn named_source_chaining() {
        let g = graph(
            r#"{"data":[{"name":"d1","values":[],"transform":[{"type":"collect"}]},
                        {"name":"d2","source":"d1"}]}"#,
        )
        .unwrap();
        assert!(g.edges.contains(&(NodeId::step("d1", 1), NodeId::step("d2", 0))));
    }

    #[test]
    fn extent_and_update_edges() {
        let g = graph(
            r#"{"signals":[{"name":"half","update":"ext[1] / 2"}],
                "data":[{"name":"d","values":[],"transform":[{"type":"extent","field":"x","signal":"ext"}]},
                        {"name":"e","values":[],"transform":[{"type":"filter","expr":"datum.x < half"}]}]}"#,
        )
        .unwrap();
        assert!(g.edges.contains(&(NodeId::step("d", 1), NodeId::signal("ext"))));
        assert!(g.edges.contains(&(NodeId::signal("ext"), NodeId::signal("half"))));
        assert!(g.edges.contains(&(NodeId::signal("half"), NodeId::step("e", 1))));
        let order = g.topological_order().unwrap();
        let pos = |n: &NodeId| order.iter().position(|m| m == n).unwrap();
        assert!(pos(&NodeId::step("d", 1)) < pos(&NodeId::step("e", 1)));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = graph(r#"{"data":[{"name":"a","source":"b"},{"name":"b","source":"a"}]}"#);
        assert!(matches!(err, Err(SpecError::CyclicDependency(_))));
        let err = graph(
            r#"{"data":[{"name":"a","values":[],"transform":[
                 {"type":"filter","expr":"datum.x < e[1]"},
                 {"type":"extent","field":"x","signal":"e"}]}]}"#,
        );
        assert!(matches!(err, Err(SpecError::CyclicDependency(_))));
    }

    #[test]
    fn deterministic() {
        let doc = crate::spec::tests::HISTOGRAM;
        assert_eq!(graph(doc).unwrap(), graph(doc).unwrap());
    }
}
