//! Joint loss and training loop.
//!
//! Per instance and step `t` the loss adds the pointer cross-entropy against
//! the Dijkstra trace to the relaxed potential objective on the heuristic
//! values:
//!
//! ```text
//! (y_s - y_t) + Σ_(u,v) (y_v - y_u) · 1[y_v - y_u > w_uv] + λ ‖y‖²
//! ```
//!
//! Both parts are averaged over the `T` steps of the trace. The indicator is
//! a constant gate: no gradient flows through it. With `hinge_penalty` the
//! gated quantity becomes `y_v - y_u - w_uv`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{adam_step, AdamConfig, Tape, Tensor, TensorError, Var};
use crate::graph::ProblemInstance;
use crate::model::{
    pointer_targets, rollout_with_layout, ArcLayout, ModelConfig, ModelError, ModelParameters,
    StepOutputs, StepStats, TapeModel, TapeStep,
};
use crate::rng;
use crate::search::{check_constraints, instance_trace, DijkstraTrace};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("rollout has {rollout} steps but the trace has {trace}")]
    LengthMismatch { rollout: usize, trace: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    DivergenceDetected {
        epoch: usize,
        batch: usize,
        report: Box<TrainReport>,
    },
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
}

/// An instance with everything the loss needs precomputed.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub instance: ProblemInstance,
    pub trace: DijkstraTrace,
    pub layout: ArcLayout,
    /// Cross-entropy target row per node, one vector per trace step.
    pub targets: Vec<Vec<usize>>,
    arc_src: Arc<[usize]>,
    arc_dst: Arc<[usize]>,
    arc_weight: Vec<f64>,
}

impl TrainingSample {
    pub fn new(instance: ProblemInstance) -> Self {
        let trace = instance_trace(&instance);
        let layout = ArcLayout::new(&instance);
        let targets = trace
            .steps
            .iter()
            .map(|s| pointer_targets(&layout, &s.predecessors))
            .collect();
        let arcs = instance.graph.arcs();
        Self {
            arc_src: arcs.iter().map(|a| a.src).collect(),
            arc_dst: arcs.iter().map(|a| a.dst).collect(),
            arc_weight: arcs.iter().map(|a| a.weight).collect(),
            instance,
            trace,
            layout,
            targets,
        }
    }

    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    /// Shortest-path cost from source to target.
    pub fn optimal_cost(&self) -> f64 {
        self.trace.distances[self.instance.target]
    }
}

pub fn prepare(instances: &[ProblemInstance]) -> Vec<TrainingSample> {
    instances
        .par_iter()
        .cloned()
        .map(TrainingSample::new)
        .collect()
}

/// Loss terms, each averaged over steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_term: f64,
    pub objective_term: f64,
    pub violation_term: f64,
    pub norm_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn accumulate(&mut self, other: &LossBreakdown, weight: f64) {
        self.ce_term += weight * other.ce_term;
        self.objective_term += weight * other.objective_term;
        self.violation_term += weight * other.violation_term;
        self.norm_term += weight * other.norm_term;
        self.total += weight * other.total;
    }

    pub fn is_finite(&self) -> bool {
        [
            self.ce_term,
            self.objective_term,
            self.violation_term,
            self.norm_term,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Heuristic-part weights of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub hinge: bool,
}

impl From<&ModelConfig> for PenaltyConfig {
    fn from(c: &ModelConfig) -> Self {
        Self {
            lambda: c.lambda,
            hinge: c.hinge_penalty,
        }
    }
}

/// The loss recorded on a tape: the differentiable total plus its terms.
pub struct LossVars {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

/// Record the joint loss of `outputs` against `sample` on `tape`.
pub fn joint_loss(
    tape: &mut Tape,
    outputs: &[TapeStep],
    sample: &TrainingSample,
    penalty: PenaltyConfig,
) -> Result<LossVars, TrainError> {
    if outputs.len() != sample.steps() {
        return Err(TrainError::LengthMismatch {
            rollout: outputs.len(),
            trace: sample.steps(),
        });
    }
    let steps = outputs.len() as f64;
    let (s, t) = (sample.instance.source, sample.instance.target);
    let src_idx: Arc<[usize]> = Arc::from(vec![s]);
    let tgt_idx: Arc<[usize]> = Arc::from(vec![t]);
    let mut ce_terms = Vec::with_capacity(outputs.len());
    let mut heuristic_terms = Vec::with_capacity(outputs.len());
    let mut parts = LossBreakdown::default();
    for (step, targets) in outputs.iter().zip(&sample.targets) {
        let ce = tape.segment_cross_entropy(step.pointer_logits, &sample.layout.dst, targets)?;
        parts.ce_term += tape.value(ce).item();
        ce_terms.push(ce);

        let y = step.heuristic;
        let ys = tape.gather_rows(y, src_idx.clone())?;
        let yt = tape.gather_rows(y, tgt_idx.clone())?;
        let objective = tape.sub(ys, yt)?;
        parts.objective_term += tape.value(objective).item();

        let y_to = tape.gather_rows(y, sample.arc_dst.clone())?;
        let y_from = tape.gather_rows(y, sample.arc_src.clone())?;
        let diff = tape.sub(y_to, y_from)?;
        let gate: Vec<f64> = tape
            .value(diff)
            .data()
            .iter()
            .zip(&sample.arc_weight)
            .map(|(d, w)| if d > w { 1.0 } else { 0.0 })
            .collect();
        let gated = if penalty.hinge {
            let w = tape.constant(Tensor::column(sample.arc_weight.clone()));
            let excess = tape.sub(diff, w)?;
            tape.mul_const(excess, gate.into())?
        } else {
            tape.mul_const(diff, gate.into())?
        };
        let violation = tape.sum(gated);
        parts.violation_term += tape.value(violation).item();

        let sq = tape.sum_squares(y);
        let norm = tape.scale(sq, penalty.lambda);
        parts.norm_term += tape.value(norm).item();

        let a = tape.add(objective, violation)?;
        heuristic_terms.push(tape.add(a, norm)?);
    }
    let mut total = ce_terms[0];
    for &v in ce_terms[1..].iter().chain(&heuristic_terms) {
        total = tape.add(total, v)?;
    }
    let total = tape.scale(total, 1.0 / steps);
    let scale = 1.0 / steps;
    parts.ce_term *= scale;
    parts.objective_term *= scale;
    parts.violation_term *= scale;
    parts.norm_term *= scale;
    parts.total = tape.value(total).item();
    Ok(LossVars {
        total,
        breakdown: parts,
    })
}

/// The same loss evaluated on plain step outputs (no gradients).
pub fn evaluate_loss(
    outputs: &[StepOutputs],
    sample: &TrainingSample,
    penalty: PenaltyConfig,
) -> Result<LossBreakdown, TrainError> {
    if outputs.len() != sample.steps() {
        return Err(TrainError::LengthMismatch {
            rollout: outputs.len(),
            trace: sample.steps(),
        });
    }
    let steps = outputs.len() as f64;
    let n = sample.layout.node_count;
    let mut parts = LossBreakdown::default();
    for (out, targets) in outputs.iter().zip(&sample.targets) {
        let logits = &out.pointer_logits;
        let mut max = vec![f64::NEG_INFINITY; n];
        for (a, &v) in sample.layout.dst.iter().enumerate() {
            max[v] = max[v].max(logits[a]);
        }
        let mut denom = vec![0.0; n];
        for (a, &v) in sample.layout.dst.iter().enumerate() {
            denom[v] += (logits[a] - max[v]).exp();
        }
        let ce: f64 = (0..n)
            .map(|v| max[v] + denom[v].ln() - logits[targets[v]])
            .sum::<f64>()
            / n as f64;
        parts.ce_term += ce;

        let y = out.heuristic.values();
        let (s, t) = (sample.instance.source, sample.instance.target);
        parts.objective_term += y[s] - y[t];
        for a in sample.instance.graph.arcs() {
            let d = y[a.dst] - y[a.src];
            if d > a.weight {
                parts.violation_term += if penalty.hinge { d - a.weight } else { d };
            }
        }
        parts.norm_term += penalty.lambda * y.iter().map(|v| v * v).sum::<f64>();
    }
    parts.ce_term /= steps;
    parts.objective_term /= steps;
    parts.violation_term /= steps;
    parts.norm_term /= steps;
    parts.total = parts.ce_term + parts.objective_term + parts.violation_term + parts.norm_term;
    Ok(parts)
}

/// Loss and flat parameter gradient for one instance.
pub fn instance_gradient(
    params: &ModelParameters,
    sample: &TrainingSample,
) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
    let mut tape = Tape::new();
    let model = TapeModel::new(&mut tape, params);
    let outputs = model.rollout(&mut tape, &sample.layout, sample.steps())?;
    let loss = joint_loss(&mut tape, &outputs, sample, params.config().into())?;
    tape.backward(loss.total)?;
    Ok((loss.breakdown, params.store().flat_grads_from(&tape)))
}

/// Loop settings not covered by [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement of the selection score before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 10,
            patience: 10,
        }
    }
}

/// Validation metrics of a parameter set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub loss: LossBreakdown,
    /// Mean satisfied-constraint fraction of the one-step field.
    pub constraint_fraction: f64,
    /// Fraction of (step, node) pointer predictions matching the trace.
    pub pointer_accuracy: f64,
    /// Mean of `max(0, d(s,t) - (y_t - y_s)) / d(s,t)` for the one-step field.
    pub gap_proxy: f64,
    /// `constraint_fraction - gap_proxy`; higher is better.
    pub score: f64,
}

pub fn validate(
    params: &ModelParameters,
    samples: &[TrainingSample],
) -> Result<ValidationMetrics, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let penalty = PenaltyConfig::from(params.config());
    let per: Vec<(LossBreakdown, f64, f64, usize, f64)> = samples
        .par_iter()
        .map(|sample| -> Result<_, TrainError> {
            let outputs = rollout_with_layout(
                &sample.layout,
                params,
                sample.steps(),
                &mut StepStats::default(),
            )?;
            let loss = evaluate_loss(&outputs, sample, penalty)?;
            let first = &outputs[0].heuristic;
            let constraints = check_constraints(&sample.instance.graph, first)
                .map(|r| r.satisfied_fraction)
                .unwrap_or(0.0);
            let (mut correct, mut total) = (0.0, 0usize);
            for (out, targets) in outputs.iter().zip(&sample.targets) {
                let mut best = vec![(f64::NEG_INFINITY, usize::MAX); sample.layout.node_count];
                for (a, &v) in sample.layout.dst.iter().enumerate() {
                    if out.pointer_logits[a] > best[v].0 {
                        best[v] = (out.pointer_logits[a], a);
                    }
                }
                correct += best
                    .iter()
                    .zip(targets)
                    .filter(|((_, a), t)| a == *t)
                    .count() as f64;
                total += targets.len();
            }
            let y = first.values();
            let d = sample.optimal_cost();
            let gap = (d - (y[sample.instance.target] - y[sample.instance.source])).max(0.0) / d;
            Ok((loss, constraints, correct, total, gap))
        })
        .collect::<Result<_, _>>()?;
    let count = samples.len() as f64;
    let mut m = ValidationMetrics::default();
    let (mut correct, mut total) = (0.0, 0usize);
    for (loss, constraints, c, t, gap) in &per {
        m.loss.accumulate(loss, 1.0 / count);
        m.constraint_fraction += constraints / count;
        m.gap_proxy += gap / count;
        correct += c;
        total += t;
    }
    m.pointer_accuracy = correct / total as f64;
    m.score = m.constraint_fraction - m.gap_proxy;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: LossBreakdown,
    pub validation: ValidationMetrics,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 is the initialisation.
    pub best_epoch: usize,
    pub best_score: f64,
    pub stopped_early: bool,
}

/// Train from a fresh initialisation and return the best validation
/// checkpoint. `observer` sees every epoch record as it is produced.
pub fn train(
    config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[TrainingSample],
    validation_set: &[TrainingSample],
    observer: impl FnMut(&EpochRecord),
) -> Result<(ModelParameters, TrainReport), TrainError> {
    let params = ModelParameters::init(config)?;
    train_from(params, train_config, train_set, validation_set, observer)
}

/// [`train`] starting from given parameters.
pub fn train_from(
    mut params: ModelParameters,
    train_config: &TrainConfig,
    train_set: &[TrainingSample],
    validation_set: &[TrainingSample],
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(ModelParameters, TrainReport), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    let config = params.config().clone();
    let adam = AdamConfig::new(config.learning_rate, config.weight_decay);
    let batch_size = train_config.batch_size.max(1);
    let initial = validate(&params, validation_set)?;
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_score: initial.score,
        stopped_early: false,
    };
    let mut best = params.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut since_best = 0;
    for epoch in 1..=train_config.max_epochs {
        let mut shuffle = rng::rng_from_seed(rng::derive_seed(
            config.seed,
            &[rng::label("shuffle"), epoch as u64],
        ));
        order.shuffle(&mut shuffle);
        let mut epoch_loss = LossBreakdown::default();
        for (batch_index, batch) in order.chunks(batch_size).enumerate() {
            let results: Vec<(LossBreakdown, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| instance_gradient(&params, &train_set[i]))
                .collect::<Result<_, _>>()?;
            let weight = 1.0 / batch.len() as f64;
            let mut batch_loss = LossBreakdown::default();
            for (loss, grad) in &results {
                params.store_mut().accumulate_flat(grad, weight);
                batch_loss.accumulate(loss, weight);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::DivergenceDetected {
                    epoch,
                    batch: batch_index,
                    report: Box::new(report),
                });
            }
            epoch_loss.accumulate(&batch_loss, batch.len() as f64 / train_set.len() as f64);
            adam_step(params.store_mut(), &adam);
        }
        if !params.all_finite() {
            return Err(TrainError::DivergenceDetected {
                epoch,
                batch: usize::MAX,
                report: Box::new(report),
            });
        }
        let validation = validate(&params, validation_set)?;
        let improved = validation.score > report.best_score;
        if improved {
            report.best_score = validation.score;
            report.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss,
            validation,
            improved,
        };
        observer(&record);
        report.epochs.push(record);
        if since_best >= train_config.patience {
            report.stopped_early = true;
            break;
        }
    }
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn triangle_sample() -> TrainingSample {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        TrainingSample::new(ProblemInstance::new(g, 0, 2).unwrap())
    }

    /// A single-step loss on given heuristic values and zero logits.
    fn loss_for(sample: &TrainingSample, y: &[f64], lambda: f64, hinge: bool) -> LossBreakdown {
        let mut tape = Tape::new();
        let steps: Vec<TapeStep> = (0..sample.steps())
            .map(|_| TapeStep {
                pointer_logits: tape.variable(Tensor::zeros(sample.layout.arc_count(), 1)),
                heuristic: tape.variable(Tensor::column(y.to_vec())),
            })
            .collect();
        joint_loss(&mut tape, &steps, sample, PenaltyConfig { lambda, hinge })
            .unwrap()
            .breakdown
    }

    #[test]
    fn zero_heuristic_has_no_heuristic_loss() {
        let sample = triangle_sample();
        let l = loss_for(&sample, &[0.0, 0.0, 0.0], 0.3, false);
        assert_eq!(l.objective_term, 0.0);
        assert_eq!(l.violation_term, 0.0);
        assert_eq!(l.norm_term, 0.0);
        assert!(l.ce_term > 0.0);
    }

    #[test]
    fn hand_evaluated_violation_example() {
        let sample = triangle_sample();
        let lambda = 0.1;
        let l = loss_for(&sample, &[0.0, 5.0, 0.0], lambda, false);
        assert_eq!(l.objective_term, 0.0);
        assert_eq!(l.violation_term, 10.0);
        assert!((l.norm_term - 25.0 * lambda).abs() < 1e-12);
        let sum = l.ce_term + l.objective_term + l.violation_term + l.norm_term;
        assert!((l.total - sum).abs() < 1e-12);
        // Hinge variant only charges the excess over the weight: 2 x (5 - 1).
        assert_eq!(
            loss_for(&sample, &[0.0, 5.0, 0.0], lambda, true).violation_term,
            8.0
        );
    }

    #[test]
    fn confident_correct_pointers_drive_ce_to_zero() {
        let sample = triangle_sample();
        let mut tape = Tape::new();
        let steps: Vec<TapeStep> = sample
            .targets
            .iter()
            .map(|targets| {
                let mut logits = vec![0.0; sample.layout.arc_count()];
                for &t in targets {
                    logits[t] = 60.0;
                }
                TapeStep {
                    pointer_logits: tape.variable(Tensor::column(logits)),
                    heuristic: tape.variable(Tensor::zeros(3, 1)),
                }
            })
            .collect();
        let l = joint_loss(
            &mut tape,
            &steps,
            &sample,
            PenaltyConfig {
                lambda: 1.0,
                hinge: false,
            },
        )
        .unwrap();
        assert!(l.breakdown.ce_term < 1e-20);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let sample = triangle_sample();
        let mut tape = Tape::new();
        let step = TapeStep {
            pointer_logits: tape.variable(Tensor::zeros(sample.layout.arc_count(), 1)),
            heuristic: tape.variable(Tensor::zeros(3, 1)),
        };
        assert!(matches!(
            joint_loss(
                &mut tape,
                &[step],
                &sample,
                PenaltyConfig {
                    lambda: 1.0,
                    hinge: false
                }
            ),
            Err(TrainError::LengthMismatch {
                rollout: 1,
                trace: 3
            })
        ));
    }

    #[test]
    fn plain_and_tape_losses_agree() {
        let sample = triangle_sample();
        for hinge in [false, true] {
            let config = ModelConfig {
                hidden_dim: 5,
                mlp_hidden: 4,
                hinge_penalty: hinge,
                seed: 9,
                ..ModelConfig::default()
            };
            let mut params = ModelParameters::init(&config).unwrap();
            // Scale the heuristic decoder so that some constraints are violated.
            let gh = params.get_mut("decoder.heuristic").unwrap();
            *gh = gh.map(|v| 8.0 * v);
            let (taped, _) = instance_gradient(&params, &sample).unwrap();
            let outputs = rollout_with_layout(
                &sample.layout,
                &params,
                sample.steps(),
                &mut StepStats::default(),
            )
            .unwrap();
            let plain = evaluate_loss(&outputs, &sample, (&config).into()).unwrap();
            for (a, b) in [
                (taped.ce_term, plain.ce_term),
                (taped.objective_term, plain.objective_term),
                (taped.violation_term, plain.violation_term),
                (taped.norm_term, plain.norm_term),
                (taped.total, plain.total),
            ] {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }
}
