//! Slow reference implementations: six-loop convolution, per-sample metric
//! recount and cyclic Jacobi eigendecomposition.

use hybridcnn::eval::{confusion, metrics, pca2, ConfusionMatrix, Matrix, SignConvention};
use hybridcnn::ops::{conv2d_forward, Padding};
use hybridcnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Direct six-loop cross-correlation with explicit zero padding.
pub fn naive_conv(x: &Tensor<f32>, w: &Tensor<f32>, b: &Tensor<f32>, stride: usize, padding: Padding) -> Tensor<f32> {
    let s = x.shape();
    let (n, h, wd, cin) = (s[0], s[1], s[2], s[3]);
    let (k, cout) = (w.shape()[0], w.shape()[3]);
    let (oh, ow, pt, pl) = match padding {
        Padding::Valid => ((h - k) / stride + 1, (wd - k) / stride + 1, 0, 0),
        Padding::Same => {
            let oh = h.div_ceil(stride);
            let ow = wd.div_ceil(stride);
            let ph = ((oh - 1) * stride + k).saturating_sub(h);
            let pw = ((ow - 1) * stride + k).saturating_sub(wd);
            (oh, ow, ph / 2, pw / 2)
        }
    };
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0f32; n * oh * ow * cout];
    for bi in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = b.data()[co] as f64;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let xv = xd[((bi * h + iy as usize) * wd + ix as usize) * cin + ci];
                                let wv = wdat[((ky * k + kx) * cin + ci) * cout + co];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[((bi * oh + oy) * ow + ox) * cout + co] = acc as f32;
                }
            }
        }
    }
    Tensor::new(vec![n, oh, ow, cout], out).unwrap()
}

/// Sweeps batch, size, channels, kernel, stride and padding up to (2,9,9,4).
/// Returns (cases, worst absolute difference).
pub fn conv_sweep(seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut worst) = (0, 0.0f64);
    for n in 1..=2 {
        for size in [3usize, 5, 8, 9] {
            for cin in [1usize, 3, 4] {
                for k in [1usize, 2, 3, 5] {
                    for stride in [1usize, 2, 3] {
                        for padding in [Padding::Valid, Padding::Same] {
                            let width = if size > 3 { size - 1 } else { size };
                            if k > width {
                                continue;
                            }
                            let cout = rng.random_range(1..=4);
                            let x = random(&mut rng, &[n, size, width, cin]);
                            let w = random(&mut rng, &[k, k, cin, cout]);
                            let b = random(&mut rng, &[cout]);
                            let fast = conv2d_forward(&x, &w, &b, stride, padding).unwrap();
                            let slow = naive_conv(&x, &w, &b, stride, padding);
                            assert_eq!(fast.shape(), slow.shape());
                            worst = worst.max(fast.max_abs_diff(&slow));
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    (cases, worst)
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

/// Builds `trials` random confusion matrices, expands each into an explicit
/// sample list and recounts every metric from it. Returns the number of
/// mismatching quantities (0 when everything is bit-exact).
pub fn metrics_recount(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let k = rng.random_range(2..=6);
        let mut counts = vec![vec![0u64; k]; k];
        for c in counts.iter_mut().flatten() {
            // sparse-ish so empty rows and columns turn up
            *c = if rng.random_bool(0.3) { 0 } else { rng.random_range(0..40) };
        }
        if counts.iter().flatten().all(|&c| c == 0) {
            counts[0][0] = 1;
        }
        let (mut labels, mut preds) = (Vec::new(), Vec::new());
        for (a, row) in counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                for _ in 0..c {
                    labels.push(a);
                    preds.push(p);
                }
            }
        }
        let cm = confusion(&labels, &preds, &names(k)).unwrap();
        if cm != (ConfusionMatrix { classes: names(k), counts }) {
            mismatches += 1;
        }
        let report = metrics(&cm).unwrap();
        let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
        for c in 0..k {
            let count = |f: &dyn Fn(usize, usize) -> bool| labels.iter().zip(&preds).filter(|&(&a, &p)| f(a, p)).count();
            let tp = count(&|a, p| a == c && p == c);
            let fp = count(&|a, p| a != c && p == c);
            let fn_ = count(&|a, p| a == c && p != c);
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let m = &report.per_class[c];
            mismatches += [m.precision != p, m.recall != r, m.f1 != f, m.support != (tp + fn_) as u64]
                .iter()
                .filter(|&&bad| bad)
                .count();
            ps.push(p);
            rs.push(r);
            fs.push(f);
        }
        let correct = labels.iter().zip(&preds).filter(|(a, p)| a == p).count();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / k as f64;
        mismatches += [
            report.accuracy != correct as f64 / labels.len() as f64,
            report.macro_precision != mean(&ps),
            report.macro_recall != mean(&rs),
            report.macro_f1 != mean(&fs),
        ]
        .iter()
        .filter(|&&bad| bad)
        .count();
    }
    mismatches
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
/// Returns eigenvalues and eigenvectors, sorted descending.
pub fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|p| (0..d).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * d + q].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..d {
                    let (arp, arq) = (a[r * d + p], a[r * d + q]);
                    a[r * d + p] = c * arp - s * arq;
                    a[r * d + q] = s * arp + c * arq;
                }
                for r in 0..d {
                    let (apr, aqr) = (a[p * d + r], a[q * d + r]);
                    a[p * d + r] = c * apr - s * aqr;
                    a[q * d + r] = s * apr + c * aqr;
                }
                for r in 0..d {
                    let (vrp, vrq) = (v[r * d + p], v[r * d + q]);
                    v[r * d + p] = c * vrp - s * vrq;
                    v[r * d + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|r| v[r * d + i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divisor N-1) computed entry by entry.
pub fn covariance(x: &Matrix) -> Vec<f64> {
    let (n, d) = (x.rows, x.cols);
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] =
                (0..n).map(|i| (x.row(i)[a] - mean[a]) * (x.row(i)[b] - mean[b])).sum::<f64>() / (n - 1) as f64;
        }
    }
    cov
}

pub fn max_abs_positive(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// pca2 against Jacobi on random matrices up to 20x8. Trials whose top three
/// eigenvalues sit within 1e-3 (relative) of each other are skipped, as their
/// eigenvectors are not determined to 1e-6. Returns (compared, skipped, worst
/// direction or eigenvalue difference).
pub fn pca_sweep(trials: u64, seed: u64) -> (usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut compared, mut skipped, mut worst) = (0, 0, 0.0f64);
    for trial in 0..trials {
        let n = rng.random_range(3..=20);
        let d = rng.random_range(2..=8);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (values, vectors) = jacobi_eigen(covariance(&x), d);
        let gap = (values[0] - values[1]) / values[0];
        let gap2 = if d > 2 { (values[1] - values[2]) / values[0] } else { 1.0 };
        if gap < 1e-3 || gap2 < 1e-3 {
            skipped += 1;
            continue;
        }
        let p = pca2(&x, SignConvention::MaxAbsPositive, trial).unwrap();
        for c in 0..2 {
            let expect = max_abs_positive(vectors[c].clone());
            for (a, b) in expect.iter().zip(&p.directions[c]) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((p.eigenvalues[c] - values[c]).abs() / values[0]);
        }
        compared += 1;
    }
    (compared, skipped, worst)
}
