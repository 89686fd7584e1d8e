use rand::Rng;

use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

struct ReluBackward;

impl<T: Scalar> BackwardOp<T> for ReluBackward {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let data = inputs[0]
            .data()
            .iter()
            .zip(grad.data())
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect();
        Ok(vec![Some(Tensor::new(grad.shape().to_vec(), data)?)])
    }
}

/// Row-wise softmax of a `(N, K)` tensor with max subtraction.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = x.dims2()?;
    if k < 2 {
        return Err(Error::Shape(format!("softmax needs at least 2 classes, got {k}")));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut total = T::zero();
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v = *v / total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

struct SoftmaxBackward;

impl<T: Scalar> BackwardOp<T> for SoftmaxBackward {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let k = output.shape()[1];
        let mut dx = Vec::with_capacity(grad.len());
        for (y, g) in output.data().chunks_exact(k).zip(grad.data().chunks_exact(k)) {
            let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
            dx.extend(y.iter().zip(g).map(|(&a, &b)| a * (b - dot)));
        }
        Ok(vec![Some(Tensor::new(grad.shape().to_vec(), dx)?)])
    }
}

/// Inverted-dropout mask: zero with probability `rate`, otherwise `1/(1-rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Vec<T>> {
    check_rate(rate)?;
    let keep = T::lit(1.0 / (1.0 - rate));
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

struct MaskBackward<T> {
    mask: Vec<T>,
}

impl<T: Scalar> BackwardOp<T> for MaskBackward<T> {
    fn name(&self) -> &'static str {
        "dropout"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let data = grad.data().iter().zip(&self.mask).map(|(&g, &m)| g * m).collect();
        Ok(vec![Some(Tensor::new(grad.shape().to_vec(), data)?)])
    }
}

struct ReshapeBackward;

impl<T: Scalar> BackwardOp<T> for ReshapeBackward {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(grad.clone().reshape(inputs[0].shape().to_vec())?)])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.max(T::zero()));
        self.push(y, &[x], Box::new(ReluBackward))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let y = softmax_rows(self.value(x))?;
        self.push(y, &[x], Box::new(SoftmaxBackward))
    }

    /// Inverted dropout. Outside training this returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        check_rate(rate)?;
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let mask: Vec<T> = dropout_mask(self.value(x).len(), rate, rng)?;
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let y = Tensor::new(v.shape().to_vec(), data)?;
        self.push(y, &[x], Box::new(MaskBackward { mask }))
    }

    /// `(N, ...)` to `(N, prod(...))`, preserving row-major order.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let n = v.shape()[0];
        let rest = v.len() / n;
        self.reshape(x, vec![n, rest])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        self.push(y, &[x], Box::new(ReshapeBackward))
    }
}
