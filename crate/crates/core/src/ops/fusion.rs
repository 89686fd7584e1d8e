//! Similarity-gated feature intersection.
//!
//! For every sample and channel the two feature maps are compared by cosine
//! similarity over the spatial grid. Channels at or above the threshold are
//! replaced by the mean of both maps; the rest keep the first map.

use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-(sample, channel) selection made by [`intersect_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectMask {
    pub samples: usize,
    pub channels: usize,
    /// Row-major `(sample, channel)`; true where the blended value was kept.
    pub accepted: Vec<bool>,
    pub similarity: Vec<f64>,
}

impl IntersectMask {
    pub fn is_accepted(&self, sample: usize, channel: usize) -> bool {
        self.accepted[sample * self.channels + channel]
    }

    pub fn accepted_fraction(&self) -> f64 {
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }
}

fn check(a: &[usize], b: &[usize], tau: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!(
            "similarity threshold must lie in [-1, 1], got {tau}"
        )));
    }
    if a.len() != 4 || a != b {
        return Err(Error::Shape(format!(
            "intersect_features needs equal (N,H,W,C) shapes, got {a:?} and {b:?}"
        )));
    }
    Ok(())
}

fn compute<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, tau: f64) -> Result<(Tensor<T>, IntersectMask)> {
    check(a.shape(), b.shape(), tau)?;
    let (n, h, w, c) = a.dims4()?;
    let hw = h * w;
    let (ad, bd) = (a.data(), b.data());

    let mut similarity = Vec::with_capacity(n * c);
    for s in 0..n {
        let base = s * hw * c;
        for ch in 0..c {
            let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
            let mut identical = true;
            let mut negated = true;
            for p in 0..hw {
                let (x, y) = (ad[base + p * c + ch], bd[base + p * c + ch]);
                identical &= x == y;
                negated &= x == -y;
                let (x, y) = (x.as_f64(), y.as_f64());
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let sim = if na == 0.0 || nb == 0.0 {
                0.0
            } else if identical {
                1.0
            } else if negated {
                -1.0
            } else {
                (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
            };
            similarity.push(sim);
        }
    }
    let accepted: Vec<bool> = similarity.iter().map(|&s| s >= tau).collect();

    let half = T::lit(0.5);
    let out: Vec<T> = ad
        .iter()
        .zip(bd)
        .enumerate()
        .map(|(i, (&x, &y))| {
            let s = i / (hw * c);
            if accepted[s * c + i % c] {
                (x + y) * half
            } else {
                x
            }
        })
        .collect();
    let mask = IntersectMask {
        samples: n,
        channels: c,
        accepted,
        similarity,
    };
    Ok((Tensor::new(a.shape().to_vec(), out)?, mask))
}

/// Returns the fused map and the per-channel selection.
pub fn intersect_features<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    tau: f64,
) -> Result<(Tensor<T>, IntersectMask)> {
    compute(a, b, tau)
}

/// The selection is treated as constant: gradients flow through the blend only.
struct IntersectBackward {
    accepted: Vec<bool>,
    per_sample: usize,
    channels: usize,
}

impl<T: Scalar> BackwardOp<T> for IntersectBackward {
    fn name(&self) -> &'static str {
        "intersect_features"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let half = T::lit(0.5);
        let c = self.channels;
        let keep = |i: usize| self.accepted[(i / self.per_sample) * c + i % c];
        let build = |accepted_w: T, rejected_w: T| {
            let d = grad
                .data()
                .iter()
                .enumerate()
                .map(|(i, &g)| g * if keep(i) { accepted_w } else { rejected_w })
                .collect();
            Tensor::new(grad.shape().to_vec(), d).expect("shape")
        };
        Ok(vec![
            needs[0].then(|| build(half, T::one())),
            needs[1].then(|| build(half, T::zero())),
        ])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn intersect_features(&mut self, a: Var, b: Var, tau: f64) -> Result<(Var, IntersectMask)> {
        let (y, mask) = compute(self.value(a), self.value(b), tau)?;
        let per_sample = y.len() / mask.samples;
        let op = IntersectBackward {
            accepted: mask.accepted.clone(),
            per_sample,
            channels: mask.channels,
        };
        Ok((self.push(y, &[a, b], Box::new(op))?, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn equal_inputs_pass_through_with_full_mask() {
        let a = t(&[1, 2, 1, 2], &[0.3, -1.2, 2.5, 0.7]);
        for tau in [-1.0, 0.0, 0.5, 1.0] {
            let (y, m) = intersect_features(&a, &a, tau).unwrap();
            assert_eq!(y, a);
            assert!(m.accepted.iter().all(|&x| x));
        }
    }

    #[test]
    fn negated_inputs_keep_first_map() {
        let a = t(&[1, 2, 1, 2], &[0.3, -1.2, 2.5, 0.7]);
        let b = a.map(|v| -v);
        let (y, m) = intersect_features(&a, &b, 0.5).unwrap();
        assert_eq!(y, a);
        assert!(m.accepted.iter().all(|&x| !x));
    }

    #[test]
    fn hand_cosine_example() {
        // One channel with spatial values A=[1,0], B=[1,1].
        let a = t(&[1, 2, 1, 1], &[1.0, 0.0]);
        let b = t(&[1, 2, 1, 1], &[1.0, 1.0]);
        let (y, m) = intersect_features(&a, &b, 0.5).unwrap();
        assert!((m.similarity[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(y.data(), &[1.0, 0.5]);
    }

    #[test]
    fn zero_norm_channels_have_zero_similarity() {
        let a = t(&[1, 2, 1, 1], &[0.0, 0.0]);
        let b = t(&[1, 2, 1, 1], &[1.0, 1.0]);
        let (_, m) = intersect_features(&a, &b, 0.1).unwrap();
        assert_eq!(m.similarity[0], 0.0);
        assert!(!m.accepted[0]);
    }

    #[test]
    fn validation() {
        let a = t(&[1, 2, 1, 1], &[1.0, 0.0]);
        let b = t(&[1, 1, 2, 1], &[1.0, 0.0]);
        assert!(matches!(intersect_features(&a, &b, 0.5), Err(Error::Shape(_))));
        assert!(matches!(intersect_features(&a, &a, 1.5), Err(Error::Config(_))));
    }
}
