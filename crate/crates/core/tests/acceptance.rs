//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a gated criterion fails.

mod common;

use std::time::Instant;

use common::{bellman_ford, loss_error, op_errors, TOLERANCE};
use nar_astar::dataset::{build_split, SplitSpec, TEST_SIZES};
use nar_astar::eval::{evaluate, EvalConfig, EvalReport, HeuristicSource, MetricRow, COST_EPS};
use nar_astar::graph::{
    generate_graph, sample_instance, DistributionConfig, Family, ProblemInstance,
};
use nar_astar::model::{ModelConfig, ModelParameters};
use nar_astar::report::render_table;
use nar_astar::rng;
use nar_astar::search::{astar, check_constraints, dijkstra, dijkstra_trace, HeuristicField};
use nar_astar::training::{prepare, train, TrainConfig};

const MODELS: u64 = 5;

struct Line {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// `count` instances cycling over the families and test sizes, skipping
/// graphs with no connected pair.
fn random_instances(tag: &str, count: usize) -> Vec<ProblemInstance> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let family = Family::ALL[i as usize % 3];
        let n = TEST_SIZES[(i as usize / 3) % TEST_SIZES.len()];
        let seed = rng::derive_seed(rng::label(tag), &[i]);
        let graph = generate_graph(&DistributionConfig::for_family(family, n, seed)).unwrap();
        if let Ok(instance) = sample_instance(&graph, seed) {
            out.push(instance);
        }
        i += 1;
    }
    out
}

fn oracle_equivalence() -> (bool, String) {
    let mut bad = 0;
    for inst in random_instances("oracle-equivalence", 1000) {
        let n = inst.graph.node_count();
        let a = astar(&inst, &HeuristicField::zeros(n)).unwrap();
        let d = dijkstra(&inst).unwrap();
        if a.cost != d.cost || a.iterations != d.iterations {
            bad += 1;
        }
    }
    (bad == 0, format!("{bad}/1000 mismatches"))
}

fn consistency_optimality() -> (bool, String) {
    let mut bad = 0;
    let mut checks = 0;
    for inst in random_instances("consistency", 500) {
        let d = bellman_ford(&inst.graph, inst.source);
        let optimal = dijkstra(&inst).unwrap().cost;
        for alpha in [0.0, 0.25, 0.5, 1.0] {
            let field = HeuristicField::new(
                d.iter()
                    .map(|&x| if x.is_finite() { alpha * x } else { 0.0 })
                    .collect(),
            );
            let fraction = check_constraints(&inst.graph, &field)
                .unwrap()
                .satisfied_fraction;
            let found = astar(&inst, &field).unwrap().cost;
            if fraction != 1.0 || (found - optimal).abs() > COST_EPS {
                bad += 1;
            }
            checks += 1;
        }
    }
    (bad == 0, format!("{bad}/{checks} failures"))
}

fn gradients() -> (bool, String) {
    let mut op_worst: f64 = 0.0;
    let mut loss_worst: f64 = 0.0;
    for config in 0..100 {
        for (_, err) in op_errors(config) {
            op_worst = op_worst.max(err);
        }
        loss_worst = loss_worst.max(loss_error(config).0);
    }
    (
        op_worst < TOLERANCE && loss_worst < TOLERANCE,
        format!("max relative error ops {op_worst:.2e}, loss {loss_worst:.2e} (< {TOLERANCE:.0e})"),
    )
}

fn trace_oracle() -> (bool, String) {
    let (mut distance_bad, mut tree_bad) = (0, 0);
    for inst in random_instances("trace-oracle", 1000) {
        let trace = dijkstra_trace(&inst.graph, inst.source);
        let oracle = bellman_ford(&inst.graph, inst.source);
        if trace.distances != oracle {
            distance_bad += 1;
        }
        let pred = trace.final_predecessors();
        let tree_ok = (0..inst.graph.node_count())
            .filter(|&v| oracle[v].is_finite())
            .all(|v| {
                let mut path = vec![v];
                while *path.last().unwrap() != inst.source {
                    path.push(pred[*path.last().unwrap()]);
                }
                let cost = path
                    .windows(2)
                    .rev()
                    .fold(0.0, |acc, w| acc + inst.graph.weight(w[1], w[0]).unwrap());
                cost == oracle[v]
            });
        if !tree_ok {
            tree_bad += 1;
        }
    }
    (
        distance_bad == 0 && tree_bad == 0,
        format!("{distance_bad}/1000 distance mismatches, {tree_bad}/1000 tree mismatches"),
    )
}

fn train_models() -> Vec<ModelParameters> {
    let train_split = build_split(&SplitSpec::train(), 0).unwrap();
    let validation_split = build_split(&SplitSpec::validation(), 0).unwrap();
    let (train_set, validation_set) = (
        prepare(&train_split.instances),
        prepare(&validation_split.instances),
    );
    let train_config = TrainConfig {
        max_epochs: 10,
        patience: 10,
        ..TrainConfig::default()
    };
    (0..MODELS)
        .map(|seed| {
            let config = ModelConfig {
                hidden_dim: 32,
                mlp_hidden: 32,
                lambda: 1.0,
                learning_rate: 2e-3,
                weight_decay: 1e-3,
                seed,
                ..ModelConfig::default()
            };
            let start = Instant::now();
            let (params, report) =
                train(&config, &train_config, &train_set, &validation_set, |_| {}).unwrap();
            eprintln!(
                "model {seed}: best epoch {} score {:.4} ({:.0}s)",
                report.best_epoch,
                report.best_score,
                start.elapsed().as_secs_f64()
            );
            params
        })
        .collect()
}

fn row(report: &EvalReport, family: Family, n: usize, source: HeuristicSource) -> &MetricRow {
    report
        .rows
        .iter()
        .find(|r| r.family == family && r.node_count == n && r.source == source)
        .expect("row was evaluated")
}

fn main() {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut push = |id, name, (pass, detail): (bool, String)| {
        lines.push(Line {
            id,
            name,
            pass,
            detail,
        })
    };

    push(1, "zero field reproduces Dijkstra", oracle_equivalence());
    push(2, "consistent fields are optimal", consistency_optimality());
    push(3, "finite-difference gradients", gradients());

    let models = train_models();
    let mut splits: Vec<_> = TEST_SIZES
        .iter()
        .map(|&n| build_split(&SplitSpec::test(Family::Dense, n), 0).unwrap())
        .collect();
    splits.extend(
        [16, 32, 64, 96]
            .iter()
            .map(|&n| build_split(&SplitSpec::test(Family::Sparse, n), 0).unwrap()),
    );
    let config = EvalConfig {
        trials: MODELS as usize,
        timing_reps: 5,
        seed: 0,
    };
    let report = evaluate(
        &models,
        &splits,
        &[HeuristicSource::Learnt, HeuristicSource::Random],
        &config,
    )
    .unwrap();
    let learnt = |family, n| row(&report, family, n, HeuristicSource::Learnt);

    let constraints: Vec<(usize, f64)> = [16, 32, 64, 96]
        .iter()
        .map(|&n| (n, learnt(Family::Dense, n).constraints.mean))
        .collect();
    push(
        4,
        "constraint satisfaction on dense 16-96",
        (
            constraints.iter().all(|&(_, c)| c >= 0.95),
            constraints
                .iter()
                .map(|(n, c)| format!("{n}: {c:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
                + " (>= 0.95)",
        ),
    );

    let ratio = |n| {
        let r = learnt(Family::Dense, n);
        r.iterations_astar.mean / r.iterations_dijkstra
    };
    let (r96, r256) = (ratio(96), ratio(256));
    push(
        5,
        "iteration ratio on dense 96 and 256",
        (
            r96 <= 0.67 && r256 <= 0.5,
            format!("96: {r96:.3} (<= 0.67), 256: {r256:.3} (<= 0.5)"),
        ),
    );

    let sparse: Vec<(usize, f64)> = [16, 32, 64, 96]
        .iter()
        .map(|&n| (n, learnt(Family::Sparse, n).relative_distance.mean))
        .collect();
    push(
        6,
        "sparse relative distance up to 96",
        (
            sparse.iter().all(|&(_, d)| d <= 0.02),
            sparse
                .iter()
                .map(|(n, d)| format!("{n}: {:.3}%", d * 100.0))
                .collect::<Vec<_>>()
                .join(", ")
                + " (<= 2%)",
        ),
    );

    let separation: Vec<String> = TEST_SIZES
        .iter()
        .filter(|&&n| n >= 96)
        .filter_map(|&n| {
            let (l, r) = (
                learnt(Family::Dense, n),
                row(&report, Family::Dense, n, HeuristicSource::Random),
            );
            let ok = l.relative_distance.mean < r.relative_distance.mean
                && l.iterations_astar.mean < r.iterations_astar.mean;
            (!ok).then(|| {
                format!(
                    "{n}: rel {:.4} vs {:.4}, iterations {:.2} vs {:.2}",
                    l.relative_distance.mean,
                    r.relative_distance.mean,
                    l.iterations_astar.mean,
                    r.iterations_astar.mean
                )
            })
        })
        .collect();
    push(
        7,
        "learnt beats random on dense >= 96",
        (
            separation.is_empty(),
            if separation.is_empty() {
                format!("all 6 sizes, {MODELS} seeds")
            } else {
                separation.join("; ")
            },
        ),
    );

    push(8, "trace matches Bellman-Ford", trace_oracle());

    let speedups: Vec<(usize, f64)> = [192, 224, 256]
        .iter()
        .map(|&n| (n, learnt(Family::Dense, n).speedup))
        .collect();
    push(
        9,
        "wall-clock speedup on dense 192-256",
        (
            speedups.iter().all(|&(_, s)| s > 1.0),
            speedups
                .iter()
                .map(|(n, s)| format!("{n}: {s:.2}x"))
                .collect::<Vec<_>>()
                .join(", ")
                + " (> 1)",
        ),
    );

    print!("{}", render_table(&report));
    println!("{}", report.environment);
    println!();
    for l in &lines {
        println!(
            "criterion {} {}: {} {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.name,
            l.detail
        );
    }
    println!(
        "acceptance finished in {:.0}s",
        started.elapsed().as_secs_f64()
    );
    // Wall-clock speedup is hardware-bound and reported without gating the run.
    let gated_failure = lines.iter().any(|l| !l.pass && l.id != 9);
    std::process::exit(i32::from(gated_failure));
}
