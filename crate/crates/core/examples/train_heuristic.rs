//! Train the encode-process-decode model on small dense graphs and look at
//! its one-step field on a larger graph.
//!
//!     cargo run --release --example train_heuristic -- [epochs] [out.ckpt]

use nar_astar::dataset::{build_split, SplitSpec};
use nar_astar::graph::Family;
use nar_astar::model::{infer_heuristic, ModelConfig};
use nar_astar::search::{astar, check_constraints, dijkstra};
use nar_astar::training::{prepare, train, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(5, |s| s.parse().expect("epochs"));
    let out = args.next().unwrap_or_else(|| {
        std::env::temp_dir()
            .join("train_heuristic.ckpt")
            .display()
            .to_string()
    });

    let train_set = prepare(
        &build_split(
            &SplitSpec {
                count: 300,
                ..SplitSpec::train()
            },
            0,
        )
        .unwrap()
        .instances,
    );
    let validation = prepare(&build_split(&SplitSpec::validation(), 0).unwrap().instances);
    let config = ModelConfig {
        hidden_dim: 16,
        mlp_hidden: 16,
        ..ModelConfig::default()
    };
    let train_config = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    let (params, report) = train(&config, &train_config, &train_set, &validation, |r| {
        println!(
            "epoch {:>2}  loss {:>8.4} (ce {:.4})  constraints {:.4}  pointer acc {:.3}  gap {:.4}  score {:.4}{}",
            r.epoch,
            r.train_loss.total,
            r.train_loss.ce_term,
            r.validation.constraint_fraction,
            r.validation.pointer_accuracy,
            r.validation.gap_proxy,
            r.validation.score,
            if r.improved { " *" } else { "" }
        );
    })
    .unwrap();
    params.save(out.as_ref()).unwrap();
    println!("best epoch {} -> {out}", report.best_epoch);

    let test = build_split(
        &SplitSpec {
            count: 5,
            ..SplitSpec::test(Family::Dense, 128)
        },
        0,
    )
    .unwrap();
    for instance in &test.instances {
        let field = infer_heuristic(instance, &params).unwrap();
        let found = astar(instance, &field).unwrap();
        let optimal = dijkstra(instance).unwrap();
        println!(
            "dense 128: constraints {:.4}  cost {:.4} vs {:.4}  iterations {} vs {}",
            check_constraints(&instance.graph, &field)
                .unwrap()
                .satisfied_fraction,
            found.cost,
            optimal.cost,
            found.iterations,
            optimal.iterations
        );
    }
}
