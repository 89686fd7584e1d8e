use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

pub fn dense_param_count(inputs: usize, units: usize) -> usize {
    units * (inputs + 1)
}

fn dims(x: &[usize], w: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    let [n, d] = x[..] else {
        return Err(Error::Shape(format!("dense input must be (N, D), got {x:?}")));
    };
    let [wd, u] = w[..] else {
        return Err(Error::Shape(format!("dense weights must be (D, U), got {w:?}")));
    };
    if wd != d {
        return Err(Error::Shape(format!(
            "dense weights expect {wd} inputs, input has {d}"
        )));
    }
    if b != [u] {
        return Err(Error::Shape(format!("dense bias must be [{u}], got {b:?}")));
    }
    Ok((n, d, u))
}

/// `x · w + b` for `x: (N, D)`, `w: (D, U)`, `b: (U)`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d, u) = dims(x.shape(), w.shape(), b.shape())?;
    let mut out = Vec::with_capacity(n * u);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    gemm(MatRef::new(x.data(), n, d), MatRef::new(w.data(), d, u), T::one(), &mut out);
    Tensor::new(vec![n, u], out)
}

struct DenseBackward {
    n: usize,
    d: usize,
    u: usize,
}

impl<T: Scalar> BackwardOp<T> for DenseBackward {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let Self { n, d, u } = *self;
        let dy = MatRef::new(grad.data(), n, u);
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); n * d];
            gemm(dy, MatRef::new(inputs[1].data(), d, u).t(), T::zero(), &mut dx);
            Tensor::new(vec![n, d], dx).expect("dx")
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); d * u];
            gemm(MatRef::new(inputs[0].data(), n, d).t(), dy, T::zero(), &mut dw);
            Tensor::new(vec![d, u], dw).expect("dw")
        });
        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); u];
            for row in grad.data().chunks_exact(u) {
                for (a, &g) in db.iter_mut().zip(row) {
                    *a += g;
                }
            }
            Tensor::new(vec![u], db).expect("db")
        });
        Ok(vec![dx, dw, db])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = dense_forward(self.value(x), self.value(w), self.value(b))?;
        let (n, d, u) = dims(self.value(x).shape(), self.value(w).shape(), self.value(b).shape())?;
        self.push(y, &[x, w, b], Box::new(DenseBackward { n, d, u }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_multiplied_example() {
        let x = Tensor::<f64>::from_f64(vec![1, 2], &[1.0, 2.0]).unwrap();
        let w = Tensor::from_f64(vec![2, 2], &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let b = Tensor::from_f64(vec![2], &[1.0, 1.0]).unwrap();
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), &[2.0, 5.0]);
    }

    #[test]
    fn identity_weights() {
        let x = Tensor::<f64>::from_f64(vec![2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 3 + i] = 1.0);
        let w = Tensor::from_f64(vec![3, 3], &eye).unwrap();
        let b = Tensor::zeros(vec![3]);
        assert_eq!(dense_forward(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn parameter_count_and_mismatch() {
        assert_eq!(dense_param_count(4608, 1024), 4_719_616);
        let x = Tensor::<f32>::zeros(vec![1, 3]);
        let w = Tensor::zeros(vec![4, 2]);
        let b = Tensor::zeros(vec![2]);
        assert!(matches!(dense_forward(&x, &w, &b), Err(Error::Shape(_))));
    }
}
