//! Bilinear resampling with half-pixel centers and edge clamping.

use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn axis_taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = src.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(input - 1),
                frac: src - lo as f64,
            }
        })
        .collect()
}

/// Resizes one `(H, W, C)` image.
pub fn bilinear_resize_hwc<T: Scalar>(
    src: &[T],
    h: usize,
    w: usize,
    c: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    assert_eq!(src.len(), h * w * c);
    let ys = axis_taps(h, out_h);
    let xs = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for ty in &ys {
        let fy = T::lit(ty.frac);
        let gy = T::one() - fy;
        for tx in &xs {
            let fx = T::lit(tx.frac);
            let gx = T::one() - fx;
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(ty.lo, tx.lo) * gx + at(ty.lo, tx.hi) * fx;
                let bottom = at(ty.hi, tx.lo) * gx + at(ty.hi, tx.hi) * fx;
                out.push(top * gy + bottom * fy);
            }
        }
    }
    out
}

struct ResizeBackward {
    out_h: usize,
    out_w: usize,
}

impl<T: Scalar> BackwardOp<T> for ResizeBackward {
    fn name(&self) -> &'static str {
        "bilinear_resize"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let (n, h, w, c) = inputs[0].dims4()?;
        let ys = axis_taps(h, self.out_h);
        let xs = axis_taps(w, self.out_w);
        let mut dx = Tensor::zeros(vec![n, h, w, c]);
        let d = dx.data_mut();
        let g = grad.data();
        let mut idx = 0;
        for b in 0..n {
            let base = b * h * w * c;
            for ty in &ys {
                let fy = T::lit(ty.frac);
                let gy = T::one() - fy;
                for tx in &xs {
                    let fx = T::lit(tx.frac);
                    let gx = T::one() - fx;
                    for ch in 0..c {
                        let v = g[idx];
                        idx += 1;
                        let at = |y: usize, x: usize| base + (y * w + x) * c + ch;
                        d[at(ty.lo, tx.lo)] += v * gy * gx;
                        d[at(ty.lo, tx.hi)] += v * gy * fx;
                        d[at(ty.hi, tx.lo)] += v * fy * gx;
                        d[at(ty.hi, tx.hi)] += v * fy * fx;
                    }
                }
            }
        }
        Ok(vec![Some(dx)])
    }
}

impl<T: Scalar> Tape<T> {
    /// Bilinear resize of an `(N, H, W, C)` tensor to `(N, out_h, out_w, C)`.
    /// Same-size resizing returns `x` unchanged.
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (n, h, w, c) = self.value(x).dims4()?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::Shape("resize target must be non-empty".into()));
        }
        if (h, w) == (out_h, out_w) {
            return Ok(x);
        }
        let per = h * w * c;
        let mut out = Vec::with_capacity(n * out_h * out_w * c);
        for img in self.value(x).data().chunks_exact(per) {
            out.extend(bilinear_resize_hwc(img, h, w, c, out_h, out_w));
        }
        let y = Tensor::new(vec![n, out_h, out_w, c], out)?;
        self.push(y, &[x], Box::new(ResizeBackward { out_h, out_w }))
    }
}
