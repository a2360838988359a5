//! Fit a tiny two-layer network with the tape and Adam, after checking its
//! gradient against central differences.

use nar_astar::autodiff::{adam_step, AdamConfig, ParameterStore, Tape, Tensor, Var};
use nar_astar::rng;
use rand::Rng;

fn loss(tape: &mut Tape, store: &ParameterStore, x: &Tensor, y: &Tensor) -> Var {
    let w1 = tape.param(store, 0);
    let b1 = tape.param(store, 1);
    let w2 = tape.param(store, 2);
    let x = tape.constant(x.clone());
    let y = tape.constant(y.clone());
    let h = tape.matmul(x, w1).unwrap();
    let h = tape.add_row(h, b1).unwrap();
    let h = tape.relu(h);
    let out = tape.matmul(h, w2).unwrap();
    let err = tape.sub(out, y).unwrap();
    tape.sum_squares(err)
}

fn value(store: &ParameterStore, x: &Tensor, y: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let l = loss(&mut tape, store, x, y);
    tape.value(l).item()
}

fn main() {
    let mut r = rng::rng_from_seed(1);
    let mut rand = |rows, cols| {
        Tensor::new(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| r.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    };
    let mut store = ParameterStore::new();
    store.insert("w1", rand(2, 8));
    store.insert("b1", rand(1, 8));
    store.insert("w2", rand(8, 1));
    // Target: y = |x0| + x1 on 32 points.
    let x = rand(32, 2);
    let y = Tensor::column(x.data().chunks(2).map(|p| p[0].abs() + p[1]).collect());

    let mut tape = Tape::new();
    let l = loss(&mut tape, &store, &x, &y);
    tape.backward(l).unwrap();
    store.accumulate_from(&tape, 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..store.len() {
        for k in 0..store.value(i).data().len() {
            let analytic = store.grad(i)[k];
            let base = store.value(i).data()[k];
            store.value_mut(i).data_mut()[k] = base + 1e-5;
            let up = value(&store, &x, &y);
            store.value_mut(i).data_mut()[k] = base - 1e-5;
            let down = value(&store, &x, &y);
            store.value_mut(i).data_mut()[k] = base;
            let numeric = (up - down) / 2e-5;
            worst =
                worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5));
        }
    }
    println!("max relative gradient error {worst:.2e}");
    store.zero_grads();

    let adam = AdamConfig::new(1e-2, 0.0);
    for step in 0..=500 {
        let mut tape = Tape::new();
        let l = loss(&mut tape, &store, &x, &y);
        if step % 100 == 0 {
            println!("step {step:>3}: loss {:.5}", tape.value(l).item());
        }
        tape.backward(l).unwrap();
        store.accumulate_from(&tape, 1.0);
        adam_step(&mut store, &adam);
        store.zero_grads();
    }
}
