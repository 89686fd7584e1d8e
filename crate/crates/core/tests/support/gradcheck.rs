//! Central finite differences against tape gradients, f64 throughout.

use hybridcnn::ops::Padding;
use hybridcnn::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub const PRIMITIVES: [&str; 7] = [
    "conv2d",
    "maxpool",
    "batchnorm_train",
    "dense",
    "relu",
    "softmax_cross_entropy",
    "intersect_features",
];

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks sit far outside the step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random(rng, shape).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

/// Distinct values 1/n apart so max-pool winners never tie.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    v.shuffle(rng);
    Tensor::new(shape.to_vec(), v).unwrap()
}

pub type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Var;

/// `sum(out * r)` for a fixed random `r`, or `out` itself when `r` is None.
fn objective(inputs: &[Tensor<f64>], r: Option<&Tensor<f64>>, build: &Build) -> (f64, Vec<Tensor<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = match r {
        Some(r) => {
            let rv = tape.constant(r.clone());
            let prod = tape.mul(out, rv).unwrap();
            tape.sum(prod).unwrap()
        }
        None => out,
    };
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss).unwrap();
    (value, vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect())
}

/// Worst relative error over every input element. Gradients below 1e-3 in
/// magnitude are compared on an absolute 1e-3 scale.
pub fn max_rel_error(seed: u64, inputs: &[Tensor<f64>], scalar_out: bool, build: &Build) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let r = (!scalar_out).then(|| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars);
        random(&mut rng, tape.value(out).shape())
    });
    let (_, analytic) = objective(inputs, r.as_ref(), build);
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let eval = |delta: f64| {
                let mut moved = inputs.to_vec();
                moved[k].data_mut()[i] += delta;
                objective(&moved, r.as_ref(), build).0
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let a = analytic[k].data()[i];
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    worst
}

/// Worst relative error of one primitive at one seed.
pub fn primitive_error(name: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match name {
        "conv2d" => {
            let cases = [(1, Padding::Valid), (1, Padding::Same), (2, Padding::Same), (2, Padding::Valid)];
            let (stride, padding) = cases[seed as usize % cases.len()];
            let k = 1 + 2 * (seed as usize % 2);
            let inputs = [random(&mut rng, &[2, 5, 6, 2]), random(&mut rng, &[k, k, 2, 3]), random(&mut rng, &[3])];
            max_rel_error(seed, &inputs, false, &move |t, v| t.conv2d(v[0], v[1], v[2], stride, padding).unwrap())
        }
        "maxpool" => {
            let (pool, stride, padding) =
                [(2, 2, Padding::Valid), (3, 2, Padding::Valid), (3, 2, Padding::Same)][seed as usize % 3];
            let inputs = [distinct(&mut rng, &[2, 7, 6, 3])];
            max_rel_error(seed, &inputs, false, &move |t, v| t.maxpool2d(v[0], pool, stride, padding).unwrap())
        }
        "batchnorm_train" => {
            // alternate spatial (N,H,W,C) and dense-style (N,C) inputs
            let x = if seed % 2 == 0 { random(&mut rng, &[3, 3, 2, 4]) } else { random(&mut rng, &[6, 4]) };
            let inputs = [x, random(&mut rng, &[4]), random(&mut rng, &[4])];
            max_rel_error(seed, &inputs, false, &|t, v| t.batchnorm_train(v[0], v[1], v[2], 1e-3).unwrap().0)
        }
        "dense" => {
            let inputs = [random(&mut rng, &[4, 7]), random(&mut rng, &[7, 5]), random(&mut rng, &[5])];
            max_rel_error(seed, &inputs, false, &|t, v| t.dense(v[0], v[1], v[2]).unwrap())
        }
        "relu" => {
            let inputs = [away_from_zero(&mut rng, &[3, 4, 4, 2])];
            max_rel_error(seed, &inputs, false, &|t, v| t.relu(v[0]).unwrap())
        }
        "softmax_cross_entropy" => {
            let logits = random(&mut rng, &[5, 4]).map(|v| 3.0 * v);
            let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
            max_rel_error(seed, &[logits], true, &move |t, v| t.softmax_cross_entropy(v[0], &labels).unwrap().0)
        }
        "intersect_features" => {
            let a = random(&mut rng, &[2, 3, 3, 4]);
            let noise = random(&mut rng, &[2, 3, 3, 4]);
            // channels 0, 1 agree (accepted); channels 2, 3 are negated (rejected)
            let b_data = a
                .data()
                .iter()
                .zip(noise.data())
                .enumerate()
                .map(|(i, (&x, &e))| if i % 4 < 2 { x + 0.05 * e } else { -x })
                .collect();
            let b = Tensor::new(a.shape().to_vec(), b_data).unwrap();
            max_rel_error(seed, &[a, b], false, &|t, v| t.intersect_features(v[0], v[1], 0.5).unwrap().0)
        }
        other => panic!("unknown primitive {other}"),
    }
}
