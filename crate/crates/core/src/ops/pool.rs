use super::{window_extent, Padding};
use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Max pooling; also returns, per output element, the flat input index it
/// was taken from. Ties keep the first window position in row-major order.
fn pool_impl<T: Scalar>(
    x: &Tensor<T>,
    pool: usize,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, h, w, c) = x.dims4()?;
    if pool == 0 {
        return Err(Error::Config("pool size must be positive".into()));
    }
    let (oh, pad_t) = window_extent(h, pool, stride, padding)?;
    let (ow, pad_l) = window_extent(w, pool, stride, padding)?;
    let data = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - pad_t as isize;
            let ys = y0.max(0) as usize..((y0 + pool as isize).min(h as isize)) as usize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - pad_l as isize;
                let xs = x0.max(0) as usize..((x0 + pool as isize).min(w as isize)) as usize;
                for ch in 0..c {
                    let mut best_idx = usize::MAX;
                    let mut best = T::neg_infinity();
                    for iy in ys.clone() {
                        for ix in xs.clone() {
                            let idx = ((b * h + iy) * w + ix) * c + ch;
                            if best_idx == usize::MAX || data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, oh, ow, c], out)?, argmax))
}

pub fn maxpool2d_forward<T: Scalar>(
    x: &Tensor<T>,
    pool: usize,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    pool_impl(x, pool, stride, padding).map(|(y, _)| y)
}

struct MaxPoolBackward {
    argmax: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for MaxPoolBackward {
    fn name(&self) -> &'static str {
        "maxpool2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let mut dx = Tensor::zeros(inputs[0].shape().to_vec());
        let d = dx.data_mut();
        for (&idx, &g) in self.argmax.iter().zip(grad.data()) {
            d[idx] += g;
        }
        Ok(vec![Some(dx)])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn maxpool2d(&mut self, x: Var, pool: usize, stride: usize, padding: Padding) -> Result<Var> {
        let (y, argmax) = pool_impl(self.value(x), pool, stride, padding)?;
        self.push(y, &[x], Box::new(MaxPoolBackward { argmax }))
    }
}
