//! Step-by-step Dijkstra on a hand-made graph: the supervision signal the
//! model imitates.

use nar_astar::graph::Graph;
use nar_astar::search::dijkstra_trace;

fn main() {
    //   0 --1.0-- 1 --0.5-- 3
    //   |         |
    //  0.3       0.4
    //   |         |
    //   2 --0.9-- 4         5 (isolated)
    let graph = Graph::from_edges(
        6,
        &[
            (0, 1, 1.0),
            (0, 2, 0.3),
            (1, 3, 0.5),
            (1, 4, 0.4),
            (2, 4, 0.9),
        ],
    )
    .unwrap();
    let trace = dijkstra_trace(&graph, 0);
    for (t, step) in trace.steps.iter().enumerate() {
        println!(
            "step {t}: finalise {}  predecessors {:?}",
            step.finalized, step.predecessors
        );
    }
    for (v, d) in trace.distances.iter().enumerate() {
        println!("d(0, {v}) = {d}");
    }
    // Node 5 is never reached and keeps pointing at itself.
    assert_eq!(trace.final_predecessors()[5], 5);
}
