//! A few level-1 random-search trials on reduced data.

use nar_astar::dataset::{build_split, SplitSpec};
use nar_astar::model::ModelConfig;
use nar_astar::sweep::{random_search, SearchSpace};
use nar_astar::training::{prepare, TrainConfig};

fn main() {
    let train_set = prepare(
        &build_split(
            &SplitSpec {
                count: 60,
                ..SplitSpec::train()
            },
            0,
        )
        .unwrap()
        .instances,
    );
    let validation = prepare(
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
    // Cap hidden size so the demo stays quick.
    let space = SearchSpace {
        hidden: (16, 48),
        ..SearchSpace::LEVEL_1
    };
    let results = random_search(
        &space,
        4,
        &ModelConfig::default(),
        &TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        },
        &train_set,
        &validation,
        11,
    )
    .unwrap();
    println!("rank trial hidden       lr       wd   lambda   score");
    for (rank, r) in results.iter().enumerate() {
        let c = &r.config;
        println!(
            "{rank:>4} {:>5} {:>6} {:>8.1e} {:>8.1e} {:>8.1e} {:>7.4}",
            r.trial, c.hidden_dim, c.learning_rate, c.weight_decay, c.lambda, r.score
        );
    }
}
