use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

struct AddBackward;

impl<T: Scalar> BackwardOp<T> for AddBackward {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(needs.iter().map(|&n| n.then(|| grad.clone())).collect())
    }
}

struct MulBackward;

impl<T: Scalar> BackwardOp<T> for MulBackward {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![
            needs[0].then(|| zip_map(grad, inputs[1], |g, b| g * b)),
            needs[1].then(|| zip_map(grad, inputs[0], |g, a| g * a)),
        ])
    }
}

struct SumBackward;

impl<T: Scalar> BackwardOp<T> for SumBackward {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(Tensor::full(inputs[0].shape().to_vec(), grad.data()[0]))])
    }
}

/// Elementwise mean or max of two equally shaped tensors.
struct MergeBackward {
    max: bool,
}

impl<T: Scalar> BackwardOp<T> for MergeBackward {
    fn name(&self) -> &'static str {
        if self.max {
            "merge_max"
        } else {
            "merge_mean"
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let (a, b) = (inputs[0], inputs[1]);
        if self.max {
            // Ties go to the first operand.
            let ga = |g: T, (x, y): (T, T)| if x >= y { g } else { T::zero() };
            let gb = |g: T, (x, y): (T, T)| if x >= y { T::zero() } else { g };
            let pairs: Vec<(T, T)> = a.data().iter().copied().zip(b.data().iter().copied()).collect();
            let build = |f: &dyn Fn(T, (T, T)) -> T| {
                let d = grad.data().iter().zip(&pairs).map(|(&g, &p)| f(g, p)).collect();
                Tensor::new(grad.shape().to_vec(), d).expect("shape")
            };
            Ok(vec![needs[0].then(|| build(&ga)), needs[1].then(|| build(&gb))])
        } else {
            let half = T::lit(0.5);
            Ok(needs.iter().map(|&n| n.then(|| grad.map(|g| g * half))).collect())
        }
    }
}

struct GlobalAvgPoolBackward;

impl<T: Scalar> BackwardOp<T> for GlobalAvgPoolBackward {
    fn name(&self) -> &'static str {
        "global_avg_pool"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let (n, h, w, c) = inputs[0].dims4()?;
        let inv = T::lit(1.0 / (h * w) as f64);
        let mut dx = Vec::with_capacity(n * h * w * c);
        for b in 0..n {
            let g = &grad.data()[b * c..(b + 1) * c];
            for _ in 0..h * w {
                dx.extend(g.iter().map(|&v| v * inv));
            }
        }
        Ok(vec![Some(Tensor::new(vec![n, h, w, c], dx)?)])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let y = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(y, &[a, b], Box::new(AddBackward))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let y = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(y, &[a, b], Box::new(MulBackward))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), &[x], Box::new(SumBackward))
    }

    /// Elementwise `(a + b) / 2`.
    pub fn merge_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "merge_mean")?;
        let half = T::lit(0.5);
        let y = zip_map(self.value(a), self.value(b), |x, y| (x + y) * half);
        self.push(y, &[a, b], Box::new(MergeBackward { max: false }))
    }

    /// Elementwise maximum.
    pub fn merge_max(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "merge_max")?;
        let y = zip_map(self.value(a), self.value(b), |x, y| if x >= y { x } else { y });
        self.push(y, &[a, b], Box::new(MergeBackward { max: true }))
    }

    /// `(N, H, W, C)` to `(N, C)` by spatial averaging.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, h, w, c) = self.value(x).dims4()?;
        let inv = 1.0 / (h * w) as f64;
        let mut out = vec![0.0f64; n * c];
        for (i, &v) in self.value(x).data().iter().enumerate() {
            let b = i / (h * w * c);
            out[b * c + i % c] += v.as_f64();
        }
        let y = Tensor::new(vec![n, c], out.into_iter().map(|v| T::lit(v * inv)).collect())?;
        self.push(y, &[x], Box::new(GlobalAvgPoolBackward))
    }
}
