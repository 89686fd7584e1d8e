use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hybridcnn::arch::{ForwardOptions, HybridConfig, ModelConfig, ModelGraph};
use hybridcnn::ops::{conv2d_forward, Padding};
use hybridcnn::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let x = random(&[8, 32, 32, 16], 0);
    let w = random(&[3, 3, 16, 32], 1);
    let b = random(&[32], 2);
    c.bench_function("conv2d 8x32x32x16 k3 -> 32 same", |bench| {
        bench.iter(|| conv2d_forward(black_box(&x), &w, &b, 1, Padding::Same).unwrap())
    });
}

fn hybrid_forward(c: &mut Criterion) {
    let graph = ModelGraph::new(ModelConfig::Hybrid(HybridConfig::desk()), 0).unwrap();
    let x = random(&[32, 64, 64, 3], 3);
    c.bench_function("desk hybrid forward batch 32", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let input = tape.constant(x.clone());
            let out = graph.forward(&mut tape, input, &ForwardOptions::infer()).unwrap();
            black_box(tape.value(out.logits).data()[0])
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, hybrid_forward
}
criterion_main!(benches);
