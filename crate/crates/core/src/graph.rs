//! Weighted undirected graphs, Erdős–Rényi generation and query sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range for a graph with {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(NodeId, NodeId),
    #[error("edge ({u}, {v}) has non-positive or non-finite weight {weight}")]
    BadWeight { u: NodeId, v: NodeId, weight: f64 },
    #[error("no pair of distinct mutually reachable nodes exists")]
    NoReachablePair,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// One direction of an undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub src: NodeId,
    pub dst: NodeId,
    pub weight: f64,
}

/// Undirected weighted graph stored as mirrored directed arcs.
///
/// Edge `i` (with `u < v`) owns arcs `2i` (`u -> v`) and `2i + 1` (`v -> u`).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    arcs: Vec<Arc>,
    /// Outgoing arc indices per node, in arc order.
    out_arcs: Vec<Vec<usize>>,
    /// Smallest and largest edge weight (`[inf, -inf]` without edges).
    weight_range: (f64, f64),
}

impl Graph {
    /// Build a graph from undirected edges; each `(u, v, w)` yields both arcs.
    pub fn from_edges(
        node_count: usize,
        edges: &[(NodeId, NodeId, f64)],
    ) -> Result<Self, GraphError> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        let mut arcs = Vec::with_capacity(edges.len() * 2);
        let mut out_arcs = vec![Vec::new(); node_count];
        for &(u, v, weight) in edges {
            for node in [u, v] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(GraphError::BadWeight { u, v, weight });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::ParallelEdge(u, v));
            }
            out_arcs[u].push(arcs.len());
            arcs.push(Arc {
                src: u,
                dst: v,
                weight,
            });
            out_arcs[v].push(arcs.len());
            arcs.push(Arc {
                src: v,
                dst: u,
                weight,
            });
        }
        let weight_range = edges
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                (lo.min(e.2), hi.max(e.2))
            });
        Ok(Self {
            node_count,
            arcs,
            out_arcs,
            weight_range,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// All directed arcs (twice the number of undirected edges).
    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn edge_count(&self) -> usize {
        self.arcs.len() / 2
    }

    /// Undirected edges as `(u, v, w)`, in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.arcs
            .iter()
            .step_by(2)
            .map(|a| (a.src, a.dst, a.weight))
    }

    /// Outgoing arcs of `node`. Because the graph is undirected these mirror
    /// the incoming arcs.
    pub fn out_arcs(&self, node: NodeId) -> impl Iterator<Item = &Arc> + '_ {
        self.out_arcs[node].iter().map(move |&i| &self.arcs[i])
    }

    /// `(min, max)` edge weight; `(inf, -inf)` for an edgeless graph.
    pub fn weight_range(&self) -> (f64, f64) {
        self.weight_range
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.out_arcs[node].len()
    }

    /// Weight of the edge between `u` and `v`, if any.
    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.out_arcs(u).find(|a| a.dst == v).map(|a| a.weight)
    }

    /// Connected-component label per node (labels are the smallest node id of
    /// each component).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.node_count];
        let mut stack = Vec::new();
        for root in 0..self.node_count {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = root;
            stack.push(root);
            while let Some(u) = stack.pop() {
                for arc in self.out_arcs(u) {
                    if label[arc.dst] == usize::MAX {
                        label[arc.dst] = root;
                        stack.push(arc.dst);
                    }
                }
            }
        }
        label
    }

    /// Relabel nodes: node `v` becomes `perm[v]`. Edge order is preserved.
    pub fn permuted(&self, perm: &[NodeId]) -> Graph {
        let edges: Vec<_> = self
            .edges()
            .map(|(u, v, w)| (perm[u], perm[v], w))
            .collect();
        Graph::from_edges(self.node_count, &edges).expect("a permutation preserves validity")
    }
}

/// A shortest-path query on a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub graph: Graph,
    pub source: NodeId,
    pub target: NodeId,
}

impl ProblemInstance {
    /// Checked constructor: `source != target` and the target is reachable.
    pub fn new(graph: Graph, source: NodeId, target: NodeId) -> Result<Self, GraphError> {
        let n = graph.node_count();
        for node in [source, target] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange {
                    node,
                    node_count: n,
                });
            }
        }
        if source == target {
            return Err(GraphError::InvalidInstance("source equals target".into()));
        }
        let comp = graph.components();
        if comp[source] != comp[target] {
            return Err(GraphError::InvalidInstance(format!(
                "target {target} unreachable from source {source}"
            )));
        }
        Ok(Self {
            graph,
            source,
            target,
        })
    }
}

/// Edge-density rule of a graph family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "p")]
pub enum EdgeProbability {
    Fixed(f64),
    /// `ln |V| / |V|`.
    LogOverN,
}

impl EdgeProbability {
    pub fn resolve(self, node_count: usize) -> f64 {
        match self {
            EdgeProbability::Fixed(p) => p,
            EdgeProbability::LogOverN => {
                let n = node_count as f64;
                (n.ln() / n).min(1.0)
            }
        }
    }
}

/// The three density families used for training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Sparse,
    Dense,
    VeryDense,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Sparse, Family::Dense, Family::VeryDense];

    pub fn edge_probability(self) -> EdgeProbability {
        match self {
            Family::Sparse => EdgeProbability::LogOverN,
            Family::Dense => EdgeProbability::Fixed(0.35),
            Family::VeryDense => EdgeProbability::Fixed(0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Sparse => "sparse",
            Family::Dense => "dense",
            Family::VeryDense => "very-dense",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sparse" => Ok(Family::Sparse),
            "dense" => Ok(Family::Dense),
            "very-dense" | "very_dense" => Ok(Family::VeryDense),
            other => Err(format!(
                "unknown family `{other}` (expected sparse, dense or very-dense)"
            )),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_WEIGHT_LOW: f64 = 0.2;
pub const DEFAULT_WEIGHT_HIGH: f64 = 1.0;

/// Parameters of one Erdős–Rényi draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub node_count: usize,
    pub edge_probability: EdgeProbability,
    pub weight_low: f64,
    pub weight_high: f64,
    pub seed: u64,
}

impl DistributionConfig {
    pub fn new(node_count: usize, edge_probability: EdgeProbability, seed: u64) -> Self {
        Self {
            node_count,
            edge_probability,
            weight_low: DEFAULT_WEIGHT_LOW,
            weight_high: DEFAULT_WEIGHT_HIGH,
            seed,
        }
    }

    pub fn for_family(family: Family, node_count: usize, seed: u64) -> Self {
        Self::new(node_count, family.edge_probability(), seed)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.node_count == 0 {
            return Err(GraphError::InvalidDistribution(
                "node_count must be positive".into(),
            ));
        }
        let p = self.edge_probability.resolve(self.node_count);
        // p = 0 is accepted so that degenerate empty graphs can be drawn in tests.
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidDistribution(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
        if !(self.weight_low > 0.0
            && self.weight_low <= self.weight_high
            && self.weight_high.is_finite())
        {
            return Err(GraphError::InvalidDistribution(format!(
                "weight range [{}, {}] must satisfy 0 < low <= high",
                self.weight_low, self.weight_high
            )));
        }
        Ok(())
    }
}

/// Draw an Erdős–Rényi graph: each unordered pair independently with
/// probability `p`, weights uniform on `[weight_low, weight_high]`.
pub fn generate_graph(config: &DistributionConfig) -> Result<Graph, GraphError> {
    config.validate()?;
    let n = config.node_count;
    let p = config.edge_probability.resolve(n);
    let mut rng = rng::rng_from_seed(config.seed);
    let span = config.weight_high - config.weight_low;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                let w = config.weight_low + span * rng.random::<f64>();
                edges.push((u, v, w));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Pick `(source, target)` uniformly among ordered pairs of distinct nodes
/// that lie in the same connected component.
pub fn sample_instance(graph: &Graph, seed: u64) -> Result<ProblemInstance, GraphError> {
    let comp = graph.components();
    let n = graph.node_count();
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for v in 0..n {
        members[comp[v]].push(v);
    }
    let total: usize = members
        .iter()
        .map(|m| m.len() * m.len().saturating_sub(1))
        .sum();
    if total == 0 {
        return Err(GraphError::NoReachablePair);
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut pick = rng.random_range(0..total);
    for group in members.iter().filter(|m| m.len() >= 2) {
        let pairs = group.len() * (group.len() - 1);
        if pick < pairs {
            let s = group[pick / (group.len() - 1)];
            let mut t_index = pick % (group.len() - 1);
            if group[t_index] >= s {
                t_index += 1;
            }
            let t = group[t_index];
            return Ok(ProblemInstance {
                graph: graph.clone(),
                source: s,
                target: t,
            });
        }
        pick -= pairs;
    }
    unreachable!("pick index is below the pair total")
}
