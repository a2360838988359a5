//! The compiled one-step evaluator against the generic MLP route, and the
//! resulting time budget next to Dijkstra.

use std::time::Instant;

use nar_astar::graph::{generate_graph, sample_instance, DistributionConfig, Family};
use nar_astar::model::{infer_heuristic, CompiledHeuristic, ModelConfig, ModelParameters};
use nar_astar::search::dijkstra;

fn time<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let start = Instant::now();
    let mut out = f();
    for _ in 1..reps {
        out = f();
    }
    (out, start.elapsed().as_secs_f64() / reps as f64)
}

fn main() {
    let params = ModelParameters::init(&ModelConfig {
        seed: 2,
        ..ModelConfig::default()
    })
    .unwrap();
    let compiled = CompiledHeuristic::new(&params).expect("two-layer MLPs compile");
    for n in [64, 128, 256] {
        let graph = generate_graph(&DistributionConfig::for_family(Family::Dense, n, 5)).unwrap();
        let instance = sample_instance(&graph, 5).unwrap();
        let (reference, t_ref) = time(5, || infer_heuristic(&instance, &params).unwrap());
        let (fast, t_fast) = time(50, || compiled.infer(&instance));
        // Dijkstra stops at the target, so its cost depends on the query.
        let queries: Vec<_> = (0..20)
            .filter_map(|seed| sample_instance(&graph, seed).ok())
            .collect();
        let (_, t_all) = time(5, || {
            for q in &queries {
                dijkstra(q).unwrap();
            }
        });
        let t_dijkstra = t_all / queries.len() as f64;
        let diff = reference
            .values()
            .iter()
            .zip(fast.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "dense {n:>3}: {} arcs  reference {:>8.1} us  compiled {:>6.1} us  dijkstra (mean of {} queries) {:>6.1} us  max diff {diff:.1e}",
            graph.arcs().len(),
            t_ref * 1e6,
            t_fast * 1e6,
            queries.len(),
            t_dijkstra * 1e6
        );
    }
}
