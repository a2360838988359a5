//! Oracles shared by the gradient tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use nar_astar::autodiff::{Tape, Tensor, Var};
use nar_astar::dataset::{draw_instance, SplitSpec};
use nar_astar::graph::{Family, Graph};
use nar_astar::model::{rollout_with_layout, ModelConfig, ModelParameters, StepStats};
use nar_astar::rng;
use nar_astar::training::{evaluate_loss, instance_gradient, PenaltyConfig, TrainingSample};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn bellman_ford(graph: &Graph, source: usize) -> Vec<f64> {
    let n = graph.node_count();
    let mut d = vec![f64::INFINITY; n];
    d[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for a in graph.arcs() {
            if d[a.src] + a.weight < d[a.dst] {
                d[a.dst] = d[a.src] + a.weight;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor: below this magnitude gradients are compared absolutely.
const FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random_tensor(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    // Keep clear of the relu kink at zero.
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = r.random_range(0.05..1.5);
            if r.random::<bool>() {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Max relative error of `build`'s gradient with respect to every input
/// element. `build` must return a scalar.
fn check(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad_tensor(v).into_data())
        .collect();

    let eval = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        for k in 0..input.data().len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[i][k], numeric));
        }
    }
    worst
}

/// Reduce a tensor to a scalar through fixed random weights so that every
/// element gets a distinct gradient.
fn weighted_sum(tape: &mut Tape, v: Var, r: &mut ChaCha8Rng) -> Var {
    let len = tape.value(v).data().len();
    let w: Arc<[f64]> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
    let m = tape.mul_const(v, w).unwrap();
    tape.sum(m)
}

/// Worst relative error per op for one random configuration.
pub fn op_errors(config: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng::rng_from_seed(config);
    let (n, k, m) = (
        r.random_range(1..5),
        r.random_range(1..5),
        r.random_range(1..5),
    );
    let seed = r.random::<u64>();
    let a = random_tensor(&mut r, n, k);
    let b = random_tensor(&mut r, k, m);
    let c = random_tensor(&mut r, n, k);
    let row = random_tensor(&mut r, 1, k);
    let mask: Arc<[f64]> = (0..n * k).map(|_| r.random_range(-2.0..2.0)).collect();
    let ws = |tape: &mut Tape, v: Var| weighted_sum(tape, v, &mut rng::rng_from_seed(seed));

    let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Var>)> = vec![
        (
            "matmul",
            vec![a.clone(), b.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.matmul(v[0], v[1]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "add",
            vec![a.clone(), c.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.add(v[0], v[1]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "sub",
            vec![a.clone(), c.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.sub(v[0], v[1]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "mul",
            vec![a.clone(), c.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.mul(v[0], v[1]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "add_row",
            vec![a.clone(), row.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.add_row(v[0], v[1]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "scale",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.scale(v[0], -1.7);
                ws(t, x)
            }),
        ),
        ("mul_const", vec![a.clone()], {
            let mask = mask.clone();
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.mul_const(v[0], mask.clone()).unwrap();
                ws(t, x)
            })
        }),
        (
            "concat_cols",
            vec![a.clone(), c.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.concat_cols(&[v[0], v[1], v[0]]).unwrap();
                ws(t, x)
            }),
        ),
        (
            "slice_rows",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let rows = t.value(v[0]).rows();
                let x = t.slice_rows(v[0], rows / 2, rows - rows / 2).unwrap();
                ws(t, x)
            }),
        ),
        (
            "relu",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.relu(v[0]);
                ws(t, x)
            }),
        ),
        (
            "gather_rows",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let rows = t.value(v[0]).rows();
                let index: Arc<[usize]> = (0..2 * rows + 1).map(|i| (i * 7) % rows).collect();
                let x = t.gather_rows(v[0], index).unwrap();
                ws(t, x)
            }),
        ),
        (
            "segment_max",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let rows = t.value(v[0]).rows();
                let segment: Vec<usize> = (0..rows).map(|i| i % 2).collect();
                let x = t.segment_max(v[0], &segment, 3).unwrap();
                ws(t, x)
            }),
        ),
        (
            "segment_cross_entropy",
            vec![random_tensor(&mut r, 2 * n + 1, 1)],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let rows = t.value(v[0]).rows();
                let segment: Vec<usize> = (0..rows).map(|i| i % 2).collect();
                t.segment_cross_entropy(v[0], &segment, &[0, 1]).unwrap()
            }),
        ),
        (
            "sum_squares",
            vec![a.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| t.sum_squares(v[0])),
        ),
        (
            "composite",
            vec![a.clone(), b.clone(), row.clone()],
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let x = t.matmul(v[0], v[1]).unwrap();
                let x = t.relu(x);
                let y = t.add_row(v[0], v[2]).unwrap();
                let s = t.sum_squares(y);
                let x = ws(t, x);
                t.add(x, s).unwrap()
            }),
        ),
    ];
    cases
        .iter()
        .map(|(name, inputs, build)| (*name, check(inputs, build.as_ref())))
        .collect()
}

fn loss_of(params: &ModelParameters, sample: &TrainingSample) -> f64 {
    let outputs = rollout_with_layout(
        &sample.layout,
        params,
        sample.steps(),
        &mut StepStats::default(),
    )
    .unwrap();
    evaluate_loss(&outputs, sample, PenaltyConfig::from(params.config()))
        .unwrap()
        .total
}

/// Worst relative error over every parameter coordinate of the full loss
/// for one random model and instance, with the coordinate that attains it.
pub fn loss_error(config: u64) -> (f64, String) {
    let mut r = rng::rng_from_seed(1000 + config);
    let model = ModelConfig {
        hidden_dim: r.random_range(2..5),
        mlp_hidden: r.random_range(2..5),
        mlp_layers: r.random_range(1..4),
        lambda: r.random_range(0.0..0.5),
        hinge_penalty: r.random::<bool>(),
        seed: config,
        ..ModelConfig::default()
    };
    let family = Family::ALL[config as usize % 3];
    let spec = SplitSpec::new("grad", family, r.random_range(3..7), 1);
    let sample = TrainingSample::new(draw_instance(&spec, config, 0).unwrap());
    let mut params = ModelParameters::init(&model).unwrap();
    // Perturb so that biases and the gated penalty are exercised.
    for i in 0..params.store().len() {
        for x in params.store_mut().value_mut(i).data_mut() {
            *x += r.random_range(-0.3..0.3);
        }
    }
    let (_, grad) = instance_gradient(&params, &sample).unwrap();
    let mut worst = (0.0, String::new());
    let mut flat = 0;
    for i in 0..params.store().len() {
        for k in 0..params.store().value(i).data().len() {
            let base = params.store().value(i).data()[k];
            params.store_mut().value_mut(i).data_mut()[k] = base + STEP;
            let up = loss_of(&params, &sample);
            params.store_mut().value_mut(i).data_mut()[k] = base - STEP;
            let down = loss_of(&params, &sample);
            params.store_mut().value_mut(i).data_mut()[k] = base;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(grad[flat], numeric);
            if err > worst.0 {
                worst = (
                    err,
                    format!(
                        "{}[{k}]: analytic {} numeric {numeric}",
                        params.store().name(i),
                        grad[flat]
                    ),
                );
            }
            flat += 1;
        }
    }
    worst
}
