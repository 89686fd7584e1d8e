//! Batch normalization over every axis except the trailing channel axis.

use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-channel batch statistics (biased variance).
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn channels<T: Scalar>(x: &Tensor<T>, params: &[&Tensor<T>]) -> Result<usize> {
    let c = *x.shape().last().unwrap_or(&0);
    if x.rank() < 2 {
        return Err(Error::Shape(format!(
            "batchnorm input needs a batch axis, got {:?}",
            x.shape()
        )));
    }
    for p in params {
        if p.shape() != [c] {
            return Err(Error::Shape(format!(
                "batchnorm parameter of shape {:?} does not match {c} channels",
                p.shape()
            )));
        }
    }
    Ok(c)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("batchnorm eps must be >= 0, got {eps}")));
    }
    Ok(())
}

fn batch_stats<T: Scalar>(x: &[T], c: usize) -> BatchStats<T> {
    let m = x.len() / c;
    let mut mean = vec![0.0f64; c];
    for row in x.chunks_exact(c) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut var = vec![0.0f64; c];
    for row in x.chunks_exact(c) {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.as_f64() - mu;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= m as f64);
    BatchStats {
        mean: mean.into_iter().map(T::lit).collect(),
        var: var.into_iter().map(T::lit).collect(),
    }
}

fn normalize<T: Scalar>(
    x: &[T],
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>) {
    let c = mean.len();
    let mut xhat = Vec::with_capacity(x.len());
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(c) {
        for ch in 0..c {
            let h = (row[ch] - mean[ch]) * inv_std[ch];
            xhat.push(h);
            y.push(gamma[ch] * h + beta[ch]);
        }
    }
    (xhat, y)
}

/// Training-mode normalization with batch statistics. Returns the output and
/// the statistics used, so the caller can update its moving averages.
pub fn batchnorm_train_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BatchStats<T>)> {
    check_eps(eps)?;
    let c = channels(x, &[gamma, beta])?;
    let stats = batch_stats(x.data(), c);
    let inv_std: Vec<T> = stats.var.iter().map(|&v| (v + T::lit(eps)).sqrt().recip()).collect();
    let (_, y) = normalize(x.data(), &stats.mean, &inv_std, gamma.data(), beta.data());
    Ok((Tensor::new(x.shape().to_vec(), y)?, stats))
}

/// Inference-mode normalization with stored moving statistics.
pub fn batchnorm_infer_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    moving_mean: &Tensor<T>,
    moving_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    check_eps(eps)?;
    channels(x, &[gamma, beta, moving_mean, moving_var])?;
    let inv_std: Vec<T> = moving_var
        .data()
        .iter()
        .map(|&v| (v + T::lit(eps)).sqrt().recip())
        .collect();
    let (_, y) = normalize(x.data(), moving_mean.data(), &inv_std, gamma.data(), beta.data());
    Tensor::new(x.shape().to_vec(), y)
}

struct BatchNormBackward<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    /// Batch statistics depend on the input (train mode) or are constants (infer mode).
    batch_stats: bool,
}

impl<T: Scalar> BackwardOp<T> for BatchNormBackward<T> {
    fn name(&self) -> &'static str {
        if self.batch_stats {
            "batchnorm_train"
        } else {
            "batchnorm_infer"
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let gamma = inputs[1].data();
        let c = gamma.len();
        let dy = grad.data();
        let m = dy.len() / c;

        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (gy, xh) in dy.chunks_exact(c).zip(self.xhat.chunks_exact(c)) {
            for ch in 0..c {
                dbeta[ch] += gy[ch];
                dgamma[ch] += gy[ch] * xh[ch];
            }
        }

        let dx = needs[0].then(|| {
            let mut dx = Vec::with_capacity(dy.len());
            if self.batch_stats {
                // dx = inv_std/m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)), dxhat = dy*gamma
                let mf = T::lit(m as f64);
                for (gy, xh) in dy.chunks_exact(c).zip(self.xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        let v = gamma[ch] * self.inv_std[ch] / mf
                            * (mf * gy[ch] - dbeta[ch] - xh[ch] * dgamma[ch]);
                        dx.push(v);
                    }
                }
            } else {
                for gy in dy.chunks_exact(c) {
                    for ch in 0..c {
                        dx.push(gy[ch] * gamma[ch] * self.inv_std[ch]);
                    }
                }
            }
            Tensor::new(inputs[0].shape().to_vec(), dx).expect("dx shape")
        });

        let mut out = vec![
            dx,
            needs[1].then(|| Tensor::new(vec![c], dgamma).expect("dgamma")),
            needs[2].then(|| Tensor::new(vec![c], dbeta).expect("dbeta")),
        ];
        // Moving statistics are constants.
        out.resize_with(inputs.len(), || None);
        Ok(out)
    }
}

impl<T: Scalar> Tape<T> {
    /// Training-mode batch normalization; the returned statistics feed the
    /// caller's moving-average update.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats<T>)> {
        check_eps(eps)?;
        let xv = self.value(x);
        let c = channels(xv, &[self.value(gamma), self.value(beta)])?;
        let stats = batch_stats(xv.data(), c);
        let inv_std: Vec<T> = stats.var.iter().map(|&v| (v + T::lit(eps)).sqrt().recip()).collect();
        let (xhat, y) = normalize(
            xv.data(),
            &stats.mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let y = Tensor::new(xv.shape().to_vec(), y)?;
        let op = BatchNormBackward {
            xhat,
            inv_std,
            batch_stats: true,
        };
        Ok((self.push(y, &[x, gamma, beta], Box::new(op))?, stats))
    }

    pub fn batchnorm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        moving_mean: Var,
        moving_var: Var,
        eps: f64,
    ) -> Result<Var> {
        check_eps(eps)?;
        let xv = self.value(x);
        let mean = self.value(moving_mean);
        let var = self.value(moving_var);
        channels(xv, &[self.value(gamma), self.value(beta), mean, var])?;
        let inv_std: Vec<T> = var.data().iter().map(|&v| (v + T::lit(eps)).sqrt().recip()).collect();
        let (xhat, y) = normalize(
            xv.data(),
            mean.data(),
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let y = Tensor::new(xv.shape().to_vec(), y)?;
        let op = BatchNormBackward {
            xhat,
            inv_std,
            batch_stats: false,
        };
        self.push(y, &[x, gamma, beta, moving_mean, moving_var], Box::new(op))
    }
}
