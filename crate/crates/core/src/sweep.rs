//! Two-level random search over model hyperparameters.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::rng;
use crate::training::{train, TrainConfig, TrainError, TrainReport, TrainingSample};

/// Sampling ranges of one search level. Hidden size is drawn uniformly
/// over the inclusive integer range, the rest log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden: (usize, usize),
    pub learning_rate: (f64, f64),
    pub weight_decay: (f64, f64),
    pub lambda: (f64, f64),
}

impl SearchSpace {
    /// Broad first pass.
    pub const LEVEL_1: SearchSpace = SearchSpace {
        hidden: (16, 512),
        learning_rate: (1e-4, 1e-2),
        weight_decay: (1e-5, 1e-1),
        lambda: (1e-3, 1.0),
    };

    /// Narrow second pass around the best level-1 region.
    pub const LEVEL_2: SearchSpace = SearchSpace {
        hidden: (80, 100),
        learning_rate: (9e-4, 4e-3),
        weight_decay: (9e-4, 4e-3),
        lambda: (1e-2, 5e-2),
    };

    pub fn level(level: u8) -> Option<SearchSpace> {
        match level {
            1 => Some(Self::LEVEL_1),
            2 => Some(Self::LEVEL_2),
            _ => None,
        }
    }

    pub fn contains(&self, config: &ModelConfig) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        (self.hidden.0..=self.hidden.1).contains(&config.hidden_dim)
            && config.mlp_hidden == config.hidden_dim
            && within(config.learning_rate, self.learning_rate)
            && within(config.weight_decay, self.weight_decay)
            && within(config.lambda, self.lambda)
    }

    /// Draw a config; fields not searched are copied from `base`.
    pub fn sample(&self, base: &ModelConfig, rng: &mut impl Rng) -> ModelConfig {
        let log_uniform = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| -> f64 {
            let u: f64 = rng.random();
            (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
        };
        let hidden = rng.random_range(self.hidden.0..=self.hidden.1);
        ModelConfig {
            hidden_dim: hidden,
            mlp_hidden: hidden,
            learning_rate: log_uniform(rng, self.learning_rate),
            weight_decay: log_uniform(rng, self.weight_decay),
            lambda: log_uniform(rng, self.lambda),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub trial: usize,
    pub config: ModelConfig,
    pub score: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Train `budget` sampled configs and rank them by validation score,
/// best first; ties go to the smaller seed. Trials run in parallel.
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    base: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[TrainingSample],
    validation_set: &[TrainingSample],
    master_seed: u64,
) -> Result<Vec<SweepResult>, TrainError> {
    let configs: Vec<ModelConfig> = (0..budget as u64)
        .map(|i| {
            let seed = rng::derive_seed(master_seed, &[rng::label("sweep"), i]);
            let mut r = rng::rng_from_seed(seed);
            ModelConfig {
                seed,
                ..space.sample(base, &mut r)
            }
        })
        .collect();
    let mut results: Vec<SweepResult> = configs
        .into_par_iter()
        .enumerate()
        .map(|(trial, config)| {
            let (_, report): (_, TrainReport) =
                train(&config, train_config, train_set, validation_set, |record| {
                    log::info!(
                        "trial {trial} epoch {} score {:.5}",
                        record.epoch,
                        record.validation.score
                    );
                })?;
            Ok(SweepResult {
                trial,
                config,
                score: report.best_score,
                best_epoch: report.best_epoch,
                epochs_run: report.epochs.len(),
            })
        })
        .collect::<Result<_, TrainError>>()?;
    rank(&mut results);
    Ok(results)
}

pub fn rank(results: &mut [SweepResult]) {
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.config.seed.cmp(&b.config.seed))
    });
}
