use super::{window_extent, Padding};
use crate::autodiff::{BackwardOp, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Trainable parameters of a `k×k` convolution with bias.
pub fn conv2d_param_count(kernel: usize, cin: usize, cout: usize) -> usize {
    cout * (kernel * kernel * cin + 1)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad_t: usize,
    pad_l: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.n * self.oh * self.ow
    }

    fn patch(&self) -> usize {
        self.k * self.k * self.cin
    }
}

fn geometry(
    x: &[usize],
    w: &[usize],
    b: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    let [n, h, wd, cin] = x[..] else {
        return Err(Error::Shape(format!("conv2d input must be rank 4, got {x:?}")));
    };
    let [kh, kw, wcin, cout] = w[..] else {
        return Err(Error::Shape(format!(
            "conv2d kernel must be (k,k,Cin,Cout), got {w:?}"
        )));
    };
    if kh != kw {
        return Err(Error::Shape(format!("conv2d kernel must be square, got {kh}x{kw}")));
    }
    if wcin != cin {
        return Err(Error::Shape(format!(
            "conv2d kernel expects {wcin} input channels, input has {cin}"
        )));
    }
    if b != [cout] {
        return Err(Error::Shape(format!(
            "conv2d bias must have shape [{cout}], got {b:?}"
        )));
    }
    let (oh, pad_t) = window_extent(h, kh, stride, padding)?;
    let (ow, pad_l) = window_extent(wd, kw, stride, padding)?;
    Ok(ConvGeom {
        n,
        h,
        w: wd,
        cin,
        k: kh,
        cout,
        oh,
        ow,
        stride,
        pad_t,
        pad_l,
    })
}

/// Lowers the input to a `[N·H'·W', k·k·Cin]` patch matrix whose column order
/// matches the flattened `(k, k, Cin, Cout)` kernel.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); g.rows() * patch];
    let mut row = 0;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for ky in 0..g.k {
                    let iy = (oy * g.stride + ky) as isize - g.pad_t as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.k {
                        let ix = (ox * g.stride + kx) as isize - g.pad_l as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let src = ((b * g.h + iy as usize) * g.w + ix as usize) * g.cin;
                        let off = (ky * g.k + kx) * g.cin;
                        dst[off..off + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-adds a patch matrix back onto the input grid (adjoint of `im2col`).
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut x = vec![T::zero(); g.n * g.h * g.w * g.cin];
    let mut row = 0;
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..g.k {
                    let iy = (oy * g.stride + ky) as isize - g.pad_t as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.k {
                        let ix = (ox * g.stride + kx) as isize - g.pad_l as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let dst = ((b * g.h + iy as usize) * g.w + ix as usize) * g.cin;
                        let off = (ky * g.k + kx) * g.cin;
                        for c in 0..g.cin {
                            x[dst + c] += src[off + c];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    x
}

/// 2-D convolution (cross-correlation) of an NHWC input with a `(k,k,Cin,Cout)` kernel.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = geometry(x.shape(), w.shape(), b.shape(), stride, padding)?;
    Ok(Tensor::new(vec![g.n, g.oh, g.ow, g.cout], forward_with(x.data(), w.data(), b.data(), &g))
        .expect("conv output shape"))
}

fn forward_with<T: Scalar>(x: &[T], w: &[T], b: &[T], g: &ConvGeom) -> Vec<T> {
    let rows = g.rows();
    let mut out = Vec::with_capacity(rows * g.cout);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    if g.k == 1 && g.stride == 1 && g.pad_t == 0 && g.pad_l == 0 {
        // 1x1 stride-1 convolution is a plain matrix product on the input.
        gemm(MatRef::new(x, rows, g.cin), MatRef::new(w, g.cin, g.cout), T::one(), &mut out);
    } else {
        let cols = im2col(x, g);
        gemm(
            MatRef::new(&cols, rows, g.patch()),
            MatRef::new(w, g.patch(), g.cout),
            T::one(),
            &mut out,
        );
    }
    out
}

struct Conv2dBackward {
    g: ConvGeom,
}

impl<T: Scalar> BackwardOp<T> for Conv2dBackward {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        let g = &self.g;
        let (x, w) = (inputs[0], inputs[1]);
        let rows = g.rows();
        let patch = g.patch();
        let dy = MatRef::new(grad.data(), rows, g.cout);
        let pointwise = g.k == 1 && g.stride == 1 && g.pad_t == 0 && g.pad_l == 0;

        let dx = needs[0].then(|| {
            let mut dcols = vec![T::zero(); rows * patch];
            gemm(dy, MatRef::new(w.data(), patch, g.cout).t(), T::zero(), &mut dcols);
            let data = if pointwise { dcols } else { col2im(&dcols, g) };
            Tensor::new(x.shape().to_vec(), data).expect("dx shape")
        });

        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); patch * g.cout];
            if pointwise {
                gemm(MatRef::new(x.data(), rows, patch).t(), dy, T::zero(), &mut dw);
            } else {
                let cols = im2col(x.data(), g);
                gemm(MatRef::new(&cols, rows, patch).t(), dy, T::zero(), &mut dw);
            }
            Tensor::new(w.shape().to_vec(), dw).expect("dw shape")
        });

        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); g.cout];
            for r in grad.data().chunks_exact(g.cout) {
                for (acc, &v) in db.iter_mut().zip(r) {
                    *acc += v;
                }
            }
            Tensor::new(vec![g.cout], db).expect("db shape")
        });

        Ok(vec![dx, dw, db])
    }
}

impl<T: Scalar> Tape<T> {
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let g = geometry(
            self.value(x).shape(),
            self.value(w).shape(),
            self.value(b).shape(),
            stride,
            padding,
        )?;
        let out = forward_with(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &g,
        );
        let out = Tensor::new(vec![g.n, g.oh, g.ow, g.cout], out)?;
        self.push(out, &[x, w, b], Box::new(Conv2dBackward { g }))
    }
}
