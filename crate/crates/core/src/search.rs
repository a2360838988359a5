//! Dijkstra (exhaustive with per-step traces, and early-stopped), A* over a
//! heuristic field, and the consistency checker.
//!
//! A heuristic field assigns every node a "goodness" score `y_v` that is high
//! near the target. A* turns it into the remaining-cost estimate
//! `h(v) = y_t - y_v`, whose consistency condition `h(u) <= w_uv + h(v)` is
//! `y_v - y_u <= w_uv`. The queue is ordered by `g(v) - y_v`, which differs
//! from `g(v) + h(v)` by the constant `y_t` and therefore pops in the same
//! order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use thiserror::Error;

use crate::graph::{Graph, NodeId, ProblemInstance};

/// Slack allowed before an arc counts as violated.
pub const CONSTRAINT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("target {to} unreachable from source {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("heuristic field has {got} values for a graph with {expected} nodes")]
    FieldSizeMismatch { expected: usize, got: usize },
    #[error("heuristic value at node {0} is not finite")]
    NonFiniteField(NodeId),
}

/// Per-node heuristic scores.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicField {
    values: Vec<f64>,
}

impl HeuristicField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(node_count: usize) -> Self {
        Self {
            values: vec![0.0; node_count],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn validate(&self, node_count: usize) -> Result<(), SearchError> {
        if self.values.len() != node_count {
            return Err(SearchError::FieldSizeMismatch {
                expected: node_count,
                got: self.values.len(),
            });
        }
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(v) => Err(SearchError::NonFiniteField(v)),
            None => Ok(()),
        }
    }
}

impl From<Vec<f64>> for HeuristicField {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Result of a point-to-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub path: Vec<NodeId>,
    pub cost: f64,
    /// Fresh (non-stale) pops up to and including the target.
    pub iterations: usize,
    /// Settled nodes in pop order with their cost-from-source at settle time.
    pub settled: Vec<(NodeId, f64)>,
    pub wall_time: f64,
}

impl SearchOutcome {
    pub fn expanded(&self) -> usize {
        self.settled.len()
    }
}

/// One step of an exhaustive Dijkstra run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub finalized: NodeId,
    /// Predecessor per node after finalising and relaxing; undiscovered
    /// nodes point to themselves.
    pub predecessors: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DijkstraTrace {
    pub source: NodeId,
    pub steps: Vec<TraceStep>,
    /// `f64::INFINITY` for unreachable nodes.
    pub distances: Vec<f64>,
}

impl DijkstraTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_predecessors(&self) -> &[NodeId] {
        &self
            .steps
            .last()
            .expect("trace has at least the source step")
            .predecessors
    }
}

/// Min-heap entry ordered by priority, then node id.
#[derive(Debug, Clone, Copy)]
struct Entry {
    priority: f64,
    node: NodeId,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so that BinaryHeap pops the smallest.
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Exhaustive Dijkstra from `source`, recording the predecessor array after
/// every finalisation.
pub fn dijkstra_trace(graph: &Graph, source: NodeId) -> DijkstraTrace {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<NodeId> = (0..n).collect();
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut steps = Vec::new();
    dist[source] = 0.0;
    heap.push(Entry {
        priority: 0.0,
        node: source,
    });
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for arc in graph.out_arcs(u) {
            let v = arc.dst;
            let candidate = dist[u] + arc.weight;
            if !done[v] && candidate < dist[v] {
                dist[v] = candidate;
                pred[v] = u;
                heap.push(Entry {
                    priority: candidate,
                    node: v,
                });
            }
        }
        steps.push(TraceStep {
            finalized: u,
            predecessors: pred.clone(),
        });
    }
    DijkstraTrace {
        source,
        steps,
        distances: dist,
    }
}

/// Convenience wrapper over [`dijkstra_trace`] for an instance.
pub fn instance_trace(instance: &ProblemInstance) -> DijkstraTrace {
    dijkstra_trace(&instance.graph, instance.source)
}

fn reconstruct(pred: &[NodeId], source: NodeId, target: NodeId) -> Vec<NodeId> {
    let mut path = vec![target];
    let mut v = target;
    while v != source {
        v = pred[v];
        path.push(v);
    }
    path.reverse();
    path
}

fn path_cost(graph: &Graph, path: &[NodeId]) -> f64 {
    path.windows(2)
        .map(|w| {
            graph
                .weight(w[0], w[1])
                .expect("consecutive path nodes are adjacent")
        })
        .sum()
}

/// Dijkstra stopped as soon as the target is popped.
pub fn dijkstra(instance: &ProblemInstance) -> Result<SearchOutcome, SearchError> {
    let start = Instant::now();
    let graph = &instance.graph;
    let n = graph.node_count();
    let mut g = vec![f64::INFINITY; n];
    let mut pred: Vec<NodeId> = (0..n).collect();
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut settled = Vec::new();
    g[instance.source] = 0.0;
    heap.push(Entry {
        priority: 0.0,
        node: instance.source,
    });
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if closed[u] {
            continue;
        }
        closed[u] = true;
        settled.push((u, g[u]));
        if u == instance.target {
            let path = reconstruct(&pred, instance.source, u);
            let cost = path_cost(graph, &path);
            return Ok(SearchOutcome {
                path,
                cost,
                iterations: settled.len(),
                settled,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        for arc in graph.out_arcs(u) {
            let candidate = g[u] + arc.weight;
            if !closed[arc.dst] && candidate < g[arc.dst] {
                g[arc.dst] = candidate;
                pred[arc.dst] = u;
                heap.push(Entry {
                    priority: candidate,
                    node: arc.dst,
                });
            }
        }
    }
    Err(SearchError::Unreachable {
        from: instance.source,
        to: instance.target,
    })
}

/// A* guided by `field`. Settled nodes are never reopened, so inconsistent
/// fields may return suboptimal paths.
pub fn astar(
    instance: &ProblemInstance,
    field: &HeuristicField,
) -> Result<SearchOutcome, SearchError> {
    let start = Instant::now();
    let graph = &instance.graph;
    let n = graph.node_count();
    field.validate(n)?;
    let y = field.values();
    let mut g = vec![f64::INFINITY; n];
    let mut pred: Vec<NodeId> = (0..n).collect();
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut settled = Vec::new();
    g[instance.source] = 0.0;
    heap.push(Entry {
        priority: -y[instance.source],
        node: instance.source,
    });
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if closed[u] {
            continue;
        }
        closed[u] = true;
        settled.push((u, g[u]));
        if u == instance.target {
            let path = reconstruct(&pred, instance.source, u);
            let cost = path_cost(graph, &path);
            return Ok(SearchOutcome {
                path,
                cost,
                iterations: settled.len(),
                settled,
                wall_time: start.elapsed().as_secs_f64(),
            });
        }
        for arc in graph.out_arcs(u) {
            let v = arc.dst;
            let candidate = g[u] + arc.weight;
            if !closed[v] && candidate < g[v] {
                g[v] = candidate;
                pred[v] = u;
                heap.push(Entry {
                    priority: candidate - y[v],
                    node: v,
                });
            }
        }
    }
    Err(SearchError::Unreachable {
        from: instance.source,
        to: instance.target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub src: NodeId,
    pub dst: NodeId,
    /// `y_dst - y_src - w`; strictly above [`CONSTRAINT_EPS`].
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub satisfied_fraction: f64,
    pub violations: Vec<Violation>,
}

/// Evaluate `y_v - y_u <= w_uv` over every directed arc.
pub fn check_constraints(
    graph: &Graph,
    field: &HeuristicField,
) -> Result<ConstraintReport, SearchError> {
    field.validate(graph.node_count())?;
    let y = field.values();
    let violations: Vec<Violation> = graph
        .arcs()
        .iter()
        .filter_map(|a| {
            let margin = y[a.dst] - y[a.src] - a.weight;
            (margin > CONSTRAINT_EPS).then_some(Violation {
                src: a.src,
                dst: a.dst,
                margin,
            })
        })
        .collect();
    let total = graph.arcs().len();
    let satisfied_fraction = if total == 0 {
        1.0
    } else {
        (total - violations.len()) as f64 / total as f64
    };
    Ok(ConstraintReport {
        satisfied_fraction,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(source: NodeId, target: NodeId) -> ProblemInstance {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        ProblemInstance::new(g, source, target).unwrap()
    }

    #[test]
    fn triangle_trace() {
        let trace = instance_trace(&triangle(0, 2));
        assert_eq!(trace.distances, vec![0.0, 1.0, 2.0]);
        assert_eq!(trace.final_predecessors(), &[0, 0, 1]);
        assert_eq!(trace.len(), 3);
        // After the first step node 2 is reached through the direct edge.
        assert_eq!(trace.steps[0].predecessors, vec![0, 0, 0]);
        assert_eq!(
            trace.steps.iter().map(|s| s.finalized).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn isolated_source_trace() {
        let g = Graph::from_edges(3, &[(1, 2, 1.0)]).unwrap();
        let trace = dijkstra_trace(&g, 0);
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.final_predecessors(), &[0, 1, 2]);
        assert!(trace.distances[1].is_infinite());
    }

    #[test]
    fn exact_distance_field_is_optimal() {
        let inst = triangle(0, 2);
        let field = HeuristicField::new(vec![0.0, 1.0, 2.0]);
        let out = astar(&inst, &field).unwrap();
        assert_eq!(out.cost, 2.0);
        assert_eq!(out.path, vec![0, 1, 2]);
    }

    #[test]
    fn zero_field_matches_dijkstra() {
        let inst = triangle(0, 2);
        let a = astar(&inst, &HeuristicField::zeros(3)).unwrap();
        let d = dijkstra(&inst).unwrap();
        assert_eq!(a.cost, d.cost);
        assert_eq!(a.iterations, d.iterations);
        assert_eq!(a.path, d.path);
    }

    #[test]
    fn unreachable_and_bad_fields() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        let inst = ProblemInstance {
            graph: g,
            source: 0,
            target: 2,
        };
        assert_eq!(
            dijkstra(&inst),
            Err(SearchError::Unreachable { from: 0, to: 2 })
        );
        assert_eq!(
            astar(&inst, &HeuristicField::zeros(3)),
            Err(SearchError::Unreachable { from: 0, to: 2 })
        );
        assert_eq!(
            astar(&inst, &HeuristicField::zeros(2)),
            Err(SearchError::FieldSizeMismatch {
                expected: 3,
                got: 2
            })
        );
        assert_eq!(
            astar(&inst, &HeuristicField::new(vec![0.0, f64::NAN, 0.0])),
            Err(SearchError::NonFiniteField(1))
        );
    }

    #[test]
    fn constraint_counting() {
        let g = triangle(0, 2).graph;
        let zero = check_constraints(&g, &HeuristicField::zeros(3)).unwrap();
        assert_eq!(zero.satisfied_fraction, 1.0);
        let exact = check_constraints(&g, &HeuristicField::new(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!(exact.satisfied_fraction, 1.0);
        // 0->1: 5 > 1 and 2->1: 5 > 1 are violated; the other four arcs hold.
        let bumped = check_constraints(&g, &HeuristicField::new(vec![0.0, 5.0, 0.0])).unwrap();
        assert!((bumped.satisfied_fraction - 4.0 / 6.0).abs() < 1e-15);
        let mut arcs: Vec<_> = bumped.violations.iter().map(|v| (v.src, v.dst)).collect();
        arcs.sort();
        assert_eq!(arcs, vec![(0, 1), (2, 1)]);
        assert!(bumped
            .violations
            .iter()
            .all(|v| (v.margin - 4.0).abs() < 1e-12));
    }

    #[test]
    fn tolerance_is_respected() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let on_edge = check_constraints(&g, &HeuristicField::new(vec![0.0, 1.0 + 1e-10])).unwrap();
        assert_eq!(on_edge.satisfied_fraction, 1.0);
        let over = check_constraints(&g, &HeuristicField::new(vec![0.0, 1.0 + 1e-8])).unwrap();
        assert_eq!(over.satisfied_fraction, 0.5);
    }

    #[test]
    fn empty_graph_constraints() {
        let g = Graph::from_edges(2, &[]).unwrap();
        assert_eq!(
            check_constraints(&g, &HeuristicField::zeros(2))
                .unwrap()
                .satisfied_fraction,
            1.0
        );
    }
}
