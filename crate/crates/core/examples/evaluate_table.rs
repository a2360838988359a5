//! Evaluate a checkpoint against the zero and random baselines and write
//! table.csv, report.json and series.csv.
//!
//!     cargo run --release --example evaluate_table -- [model.ckpt] [out-dir]
//!
//! Without a checkpoint a small model is trained first.

use nar_astar::dataset::{build_split, SplitSpec};
use nar_astar::eval::{evaluate, EvalConfig, HeuristicSource};
use nar_astar::graph::Family;
use nar_astar::model::{ModelConfig, ModelParameters};
use nar_astar::report::{emit_report, render_table, ReportFormat};
use nar_astar::training::{prepare, train, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let params = match args.next() {
        Some(path) => ModelParameters::load(path.as_ref()).unwrap(),
        None => {
            let tr = prepare(
                &build_split(
                    &SplitSpec {
                        count: 200,
                        ..SplitSpec::train()
                    },
                    0,
                )
                .unwrap()
                .instances,
            );
            let va = prepare(
                &build_split(
                    &SplitSpec {
                        count: 32,
                        ..SplitSpec::validation()
                    },
                    0,
                )
                .unwrap()
                .instances,
            );
            let config = ModelConfig {
                hidden_dim: 16,
                mlp_hidden: 16,
                ..ModelConfig::default()
            };
            train(
                &config,
                &TrainConfig {
                    max_epochs: 3,
                    ..TrainConfig::default()
                },
                &tr,
                &va,
                |_| {},
            )
            .unwrap()
            .0
        }
    };
    let out = args.next().unwrap_or_else(|| {
        std::env::temp_dir()
            .join("evaluate_table")
            .display()
            .to_string()
    });

    let splits: Vec<_> = [
        (Family::Sparse, 64),
        (Family::Dense, 64),
        (Family::Dense, 128),
        (Family::VeryDense, 128),
    ]
    .into_iter()
    .map(|(f, n)| {
        build_split(
            &SplitSpec {
                count: 32,
                ..SplitSpec::test(f, n)
            },
            0,
        )
        .unwrap()
    })
    .collect();
    let report = evaluate(
        &[params],
        &splits,
        &[
            HeuristicSource::Learnt,
            HeuristicSource::Zero,
            HeuristicSource::Random,
        ],
        &EvalConfig {
            trials: 3,
            timing_reps: 3,
            seed: 0,
        },
    )
    .unwrap();
    print!("{}", render_table(&report));
    for path in emit_report(&report, ReportFormat::All, out.as_ref()).unwrap() {
        println!("wrote {}", path.display());
    }
}
