use super::activation::softmax_rows;
use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Data(format!(
            "label {l} at index {i} is outside [0, {k})"
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under row-stochastic `probs`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, k) = probs.dims2()?;
    check_labels(labels, n, k)?;
    for (i, row) in probs.data().chunks_exact(k).enumerate() {
        let s: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > 1e-5 {
            return Err(Error::Data(format!(
                "probability row {i} sums to {s}, not 1"
            )));
        }
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.data()[i * k + l].as_f64().max(PROB_FLOOR).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of the mean cross-entropy w.r.t. the pre-softmax logits:
/// `(probs - onehot) / N`.
pub fn softmax_cross_entropy_grad<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let (n, k) = probs.dims2()?;
    check_labels(labels, n, k)?;
    let inv_n = T::lit(1.0 / n as f64);
    let mut g: Vec<T> = probs.data().iter().map(|&p| p * inv_n).collect();
    for (i, &l) in labels.iter().enumerate() {
        g[i * k + l] -= inv_n;
    }
    Tensor::new(vec![n, k], g)
}

struct SoftmaxCrossEntropyBackward<T> {
    probs: Tensor<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for SoftmaxCrossEntropyBackward<T> {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let scale = grad.data()[0];
        let g = softmax_cross_entropy_grad(&self.probs, &self.labels)?.map(|v| v * scale);
        Ok(vec![Some(g)])
    }
}

impl<T: Scalar> Tape<T> {
    /// Fused softmax + mean cross-entropy on logits. Returns the scalar loss
    /// and the softmax probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Tensor<T>)> {
        let probs = softmax_rows(self.value(logits))?;
        let loss = cross_entropy(&probs, labels)?;
        let op = SoftmaxCrossEntropyBackward {
            probs: probs.clone(),
            labels: labels.to_vec(),
        };
        let var = self.push(Tensor::scalar(T::lit(loss)), &[logits], Box::new(op))?;
        Ok((var, probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let p = Tensor::<f64>::from_f64(vec![2, 3], &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cross_entropy(&p, &[0, 2]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_four_class_loss_is_ln4() {
        let p = Tensor::<f64>::full(vec![3, 4], 0.25);
        assert!((cross_entropy(&p, &[0, 1, 3]).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_class_hand_example() {
        let p = Tensor::<f64>::from_f64(vec![1, 2], &[0.7, 0.3]).unwrap();
        let loss = cross_entropy(&p, &[0]).unwrap();
        assert!((loss - 0.356_674_943_938_732_4).abs() < 1e-12);
        let g = softmax_cross_entropy_grad(&p, &[0]).unwrap();
        assert!((g.data()[0] + 0.3).abs() < 1e-12);
        assert!((g.data()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Tensor::<f64>::from_f64(vec![1, 2], &[0.0, 1.0]).unwrap();
        let loss = cross_entropy(&p, &[0]).unwrap();
        assert!((loss + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn bad_labels_and_rows_are_rejected() {
        let p = Tensor::<f64>::full(vec![2, 2], 0.5);
        let err = cross_entropy(&p, &[0, 2]).unwrap_err();
        assert!(err.to_string().contains("index 1"));
        let q = Tensor::<f64>::full(vec![1, 2], 0.4);
        assert!(cross_entropy(&q, &[0]).is_err());
    }
}
