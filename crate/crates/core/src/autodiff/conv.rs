//! Raw convolution kernels shared by the tape ops (forward and backward).

use super::array::Array;

/// Output spatial size of a convolution, floor formula.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Lower a `[ci, h, w]` input into a `[ci*kh*kw, ho*wo]` patch matrix.
pub fn im2col(
    x: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let cols = ho * wo;
    let mut out = vec![0.0; ci * kh * kw * cols];
    for c in 0..ci {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * cols;
                for oy in 0..ho {
                    let iy = (oy * stride + i) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = iy as usize * w;
                    let dst = row + oy * wo;
                    for ox in 0..wo {
                        let ix = (ox * stride + j) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            out[dst + ox] = plane[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
    Array::new(vec![ci * kh * kw, cols], out).expect("im2col shape")
}

/// Adjoint of `im2col`: scatter a patch-matrix gradient back onto the input grid.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    col: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array {
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(w, kw, stride, pad);
    let cols = ho * wo;
    let mut out = vec![0.0; ci * h * w];
    for c in 0..ci {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * cols;
                for oy in 0..ho {
                    let iy = (oy * stride + i) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = iy as usize * w;
                    let src = row + oy * wo;
                    for ox in 0..wo {
                        let ix = (ox * stride + j) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[dst + ix as usize] += col[src + ox];
                        }
                    }
                }
            }
        }
    }
    Array::new(vec![ci, h, w], out).expect("col2im shape")
}
