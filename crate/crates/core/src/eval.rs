//! Evaluation harness: learnt, zero and random heuristic fields inside A*
//! against early-stopped Dijkstra, aggregated per (family, size).

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Split};
use crate::graph::{Family, ProblemInstance};
use crate::model::{infer_heuristic, CompiledHeuristic, ModelError, ModelParameters};
use crate::rng;
use crate::search::{
    astar, check_constraints, dijkstra, HeuristicField, SearchError, SearchOutcome,
};

/// Absolute slack when comparing a found cost with the optimum.
pub const COST_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("optimal cost is zero")]
    OptimalCostZero,
    #[error("oracle bug: found cost {found} is below the optimum {optimal}")]
    OracleBug { found: f64, optimal: f64 },
    #[error("the learnt heuristic needs a checkpoint")]
    MissingModel,
}

/// Where the A* field comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicSource {
    Learnt,
    /// All-zero field; A* then is Dijkstra.
    Zero,
    /// Values drawn uniformly from `[0, 1]`.
    Random,
}

impl HeuristicSource {
    pub fn name(self) -> &'static str {
        match self {
            HeuristicSource::Learnt => "learnt",
            HeuristicSource::Zero => "zero",
            HeuristicSource::Random => "random",
        }
    }
}

impl std::str::FromStr for HeuristicSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learnt" | "learned" => Ok(Self::Learnt),
            "zero" => Ok(Self::Zero),
            "random" => Ok(Self::Random),
            other => Err(format!(
                "unknown heuristic `{other}` (expected learnt, zero or random)"
            )),
        }
    }
}

/// `(c(found) - c(optimal)) / c(optimal)`.
pub fn compute_relative_distance(
    found: &SearchOutcome,
    optimal: &SearchOutcome,
) -> Result<f64, EvalError> {
    relative_distance(found.cost, optimal.cost)
}

pub fn relative_distance(found: f64, optimal: f64) -> Result<f64, EvalError> {
    if optimal <= 0.0 {
        return Err(EvalError::OptimalCostZero);
    }
    if found < optimal - COST_EPS {
        return Err(EvalError::OracleBug { found, optimal });
    }
    Ok(((found - optimal) / optimal).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub constraint_fraction: f64,
    pub optimal: bool,
    pub relative_distance: f64,
    pub iterations_astar: usize,
    pub iterations_dijkstra: usize,
    pub time_heuristic: f64,
    pub time_astar: f64,
    pub time_dijkstra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    /// Repetitions per timed call; the median is kept.
    pub timing_reps: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            timing_reps: 5,
            seed: 0,
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn timed<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    let mut times = Vec::with_capacity(reps.max(1));
    let mut last = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let out = f();
        times.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    (last.expect("at least one repetition"), median(times))
}

pub fn random_field(node_count: usize, seed: u64) -> HeuristicField {
    let mut r = rng::rng_from_seed(seed);
    HeuristicField::new((0..node_count).map(|_| r.random::<f64>()).collect())
}

/// A checkpoint ready for inference: the compiled single-step form when the
/// architecture allows it, the reference route otherwise.
#[derive(Debug, Clone)]
pub struct LearntHeuristic {
    params: ModelParameters,
    compiled: Option<CompiledHeuristic>,
}

impl LearntHeuristic {
    pub fn new(params: ModelParameters) -> Self {
        let compiled = CompiledHeuristic::new(&params);
        Self { params, compiled }
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn infer(&self, instance: &ProblemInstance) -> Result<HeuristicField, ModelError> {
        match &self.compiled {
            Some(c) => Ok(c.infer(instance)),
            None => infer_heuristic(instance, &self.params),
        }
    }
}

/// Evaluate one instance. `seed` drives the random baseline only.
pub fn evaluate_instance(
    instance: &ProblemInstance,
    source: HeuristicSource,
    model: Option<&LearntHeuristic>,
    seed: u64,
    timing_reps: usize,
) -> Result<InstanceMetrics, EvalError> {
    let n = instance.graph.node_count();
    let (field, time_heuristic) = match source {
        HeuristicSource::Learnt => {
            let model = model.ok_or(EvalError::MissingModel)?;
            let (field, t) = timed(timing_reps, || model.infer(instance));
            (field?, t)
        }
        HeuristicSource::Zero => timed(timing_reps, || HeuristicField::zeros(n)),
        HeuristicSource::Random => timed(timing_reps, || random_field(n, seed)),
    };
    let constraint_fraction = check_constraints(&instance.graph, &field)?.satisfied_fraction;
    let (found, time_astar) = timed(timing_reps, || astar(instance, &field));
    let found = found?;
    let (optimal, time_dijkstra) = timed(timing_reps, || dijkstra(instance));
    let optimal = optimal?;
    let relative_distance = compute_relative_distance(&found, &optimal)?;
    Ok(InstanceMetrics {
        constraint_fraction,
        optimal: found.cost <= optimal.cost + COST_EPS,
        relative_distance,
        iterations_astar: found.iterations,
        iterations_dijkstra: optimal.iterations,
        time_heuristic,
        time_astar,
        time_dijkstra,
    })
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    fn average(stats: &[Stat]) -> Self {
        let n = stats.len() as f64;
        Self {
            mean: stats.iter().map(|s| s.mean).sum::<f64>() / n,
            stderr: stats.iter().map(|s| s.stderr).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub family: Family,
    pub node_count: usize,
    pub source: HeuristicSource,
    pub instances: usize,
    pub constraints: Stat,
    pub path_accuracy: f64,
    pub relative_distance: Stat,
    pub iterations_astar: Stat,
    pub iterations_dijkstra: f64,
    pub time_heuristic: f64,
    pub time_astar: f64,
    pub time_dijkstra: f64,
    /// `time_dijkstra / (time_heuristic + time_astar)` on mean times.
    pub speedup: f64,
}

impl MetricRow {
    /// Aggregate one trial of one split.
    pub fn from_instances(
        family: Family,
        node_count: usize,
        source: HeuristicSource,
        metrics: &[InstanceMetrics],
    ) -> Self {
        let col = |f: fn(&InstanceMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
        let mean = |f: fn(&InstanceMetrics) -> f64| Stat::of(&col(f)).mean;
        let time_heuristic = mean(|m| m.time_heuristic);
        let time_astar = mean(|m| m.time_astar);
        let time_dijkstra = mean(|m| m.time_dijkstra);
        Self {
            family,
            node_count,
            source,
            instances: metrics.len(),
            constraints: Stat::of(&col(|m| m.constraint_fraction)),
            path_accuracy: mean(|m| if m.optimal { 1.0 } else { 0.0 }),
            relative_distance: Stat::of(&col(|m| m.relative_distance)),
            iterations_astar: Stat::of(&col(|m| m.iterations_astar as f64)),
            iterations_dijkstra: mean(|m| m.iterations_dijkstra as f64),
            time_heuristic,
            time_astar,
            time_dijkstra,
            speedup: time_dijkstra / (time_heuristic + time_astar),
        }
    }

    /// Average per-trial rows of the same split and source.
    pub fn average(rows: &[MetricRow]) -> Self {
        let first = &rows[0];
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let time_heuristic = avg(|r| r.time_heuristic);
        let time_astar = avg(|r| r.time_astar);
        let time_dijkstra = avg(|r| r.time_dijkstra);
        Self {
            family: first.family,
            node_count: first.node_count,
            source: first.source,
            instances: first.instances,
            constraints: Stat::average(&rows.iter().map(|r| r.constraints).collect::<Vec<_>>()),
            path_accuracy: avg(|r| r.path_accuracy),
            relative_distance: Stat::average(
                &rows.iter().map(|r| r.relative_distance).collect::<Vec<_>>(),
            ),
            iterations_astar: Stat::average(
                &rows.iter().map(|r| r.iterations_astar).collect::<Vec<_>>(),
            ),
            iterations_dijkstra: avg(|r| r.iterations_dijkstra),
            time_heuristic,
            time_astar,
            time_dijkstra,
            speedup: time_dijkstra / (time_heuristic + time_astar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub checkpoint_ids: Vec<String>,
    pub environment: String,
}

/// Short content hash identifying a checkpoint.
pub fn checkpoint_id(params: &ModelParameters) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(params.to_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// CPU model, core count and target, for interpreting timings.
pub fn environment_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_owned())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!(
        "{cpu}; {threads} threads; {}-{}",
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

/// Evaluate every split for every source over `config.trials` trials.
///
/// `models` holds one checkpoint per trial, or a single checkpoint reused by
/// all trials. It may be empty when `Learnt` is not requested. Trials differ
/// in the random-baseline stream and in the timing repetitions.
pub fn evaluate(
    models: &[ModelParameters],
    splits: &[Split],
    sources: &[HeuristicSource],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let trials = config.trials.max(1);
    if sources.contains(&HeuristicSource::Learnt) && models.is_empty() {
        return Err(EvalError::MissingModel);
    }
    let learnt: Vec<LearntHeuristic> = models.iter().cloned().map(LearntHeuristic::new).collect();
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|t| rng::derive_seed(config.seed, &[rng::label("eval-trial"), t]))
        .collect();
    let mut rows = Vec::new();
    for split in splits {
        let spec = &split.header.spec;
        for &source in sources {
            let mut per_trial = Vec::with_capacity(trials);
            for (trial, &trial_seed) in seeds.iter().enumerate() {
                let model = learnt.get(trial).or(learnt.first());
                let split_seed = rng::derive_seed(trial_seed, &[rng::label(&spec.name)]);
                let metrics: Vec<Option<InstanceMetrics>> = split
                    .instances
                    .par_iter()
                    .enumerate()
                    .map(|(i, inst)| {
                        let seed = rng::derive_seed(split_seed, &[i as u64]);
                        match evaluate_instance(inst, source, model, seed, config.timing_reps) {
                            Ok(m) => Ok(Some(m)),
                            Err(EvalError::Search(SearchError::Unreachable { .. })) => {
                                log::warn!(
                                    "{}: instance {i} has an unreachable target; excluded",
                                    spec.name
                                );
                                Ok(None)
                            }
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<_, EvalError>>()?;
                let metrics: Vec<InstanceMetrics> = metrics.into_iter().flatten().collect();
                per_trial.push(MetricRow::from_instances(
                    spec.family,
                    spec.node_count,
                    source,
                    &metrics,
                ));
            }
            rows.push(MetricRow::average(&per_trial));
        }
    }
    Ok(EvalReport {
        rows,
        trials,
        seeds,
        checkpoint_ids: models.iter().map(checkpoint_id).collect(),
        environment: environment_note(),
    })
}
