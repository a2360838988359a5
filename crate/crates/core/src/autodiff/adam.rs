use serde::{Deserialize, Serialize};

use super::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style) decay applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One Adam step over every parameter in `store`, then zero the gradients.
pub fn adam_step(store: &mut ParameterStore, config: &AdamConfig) {
    store.adam_update(
        config.lr,
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    );
}
