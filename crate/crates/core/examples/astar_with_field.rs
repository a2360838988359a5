//! A* under three heuristic fields on the same query.
//!
//! A field assigns each node a score y_v; A* orders its queue by g(v) - y_v.
//! The exact field y_v = -d(v, t) is consistent and goes straight to t.

use nar_astar::eval::{random_field, relative_distance};
use nar_astar::graph::{
    generate_graph, sample_instance, DistributionConfig, Family, ProblemInstance,
};
use nar_astar::search::{astar, check_constraints, dijkstra, dijkstra_trace, HeuristicField};

fn main() {
    let graph = generate_graph(&DistributionConfig::for_family(Family::Dense, 200, 3)).unwrap();
    let instance: ProblemInstance = sample_instance(&graph, 3).unwrap();
    let optimal = dijkstra(&instance).unwrap();
    let to_target = dijkstra_trace(&graph, instance.target).distances;

    let fields = [
        ("zero", HeuristicField::zeros(200)),
        (
            "exact",
            HeuristicField::new(to_target.iter().map(|d| -d).collect()),
        ),
        (
            "half exact",
            HeuristicField::new(to_target.iter().map(|d| -0.5 * d).collect()),
        ),
        ("random", random_field(200, 3)),
    ];
    println!(
        "dijkstra: cost {:.4}, {} iterations",
        optimal.cost, optimal.iterations
    );
    for (name, field) in &fields {
        let found = astar(&instance, field).unwrap();
        let constraints = check_constraints(&graph, field).unwrap();
        println!(
            "{name:<10} cost {:.4} (+{:.2}%)  iterations {:>3}  constraints {:.3}",
            found.cost,
            100.0 * relative_distance(found.cost, optimal.cost).unwrap(),
            found.iterations,
            constraints.satisfied_fraction,
        );
    }
}
