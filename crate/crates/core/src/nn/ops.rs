//! Raw tensor kernels shared by the layer implementations: im2col /
//! col2im patch extraction and nearest / average 2x resampling.
//!
//! Convolution and transposed convolution are both expressed as one GEMM
//! against the patch matrix, so these two kernels (plus their adjoints)
//! carry the whole convolution family.

use ndarray::{Array2, Array3, Array4};

/// Spatial output size of a convolution.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Spatial output size of a transposed convolution.
pub fn deconv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input - 1) * stride + kernel - 2 * pad
}

/// Extract sliding patches of one sample into a `(c*kh*kw, oh*ow)`
/// matrix. Out-of-bounds taps read as zero.
pub fn im2col(x: &Array3<f64>, kh: usize, kw: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut cols = Array2::zeros((c * kh * kw, oh * ow));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[(row, oy * ow + ox)] = x[(ci, iy as usize, ix as usize)];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch columns back into an image
/// of shape `(c, h, w)`.
pub fn col2im(
    cols: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut img = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        img[(ci, iy as usize, ix as usize)] += cols[(row, oy * ow + ox)];
                    }
                }
            }
        }
    }
    img
}

/// Nearest-neighbor 2x upsampling of an `(n, c, h, w)` batch.
pub fn upsample2x(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(i, ci, y, xx)| x[(i, ci, y / 2, xx / 2)])
}

/// Adjoint of [`upsample2x`]: sum each 2x2 block.
pub fn upsample2x_backward(g: &Array4<f64>) -> Array4<f64> {
    let (n, c, h2, w2) = g.dim();
    let mut out = Array4::zeros((n, c, h2 / 2, w2 / 2));
    for i in 0..n {
        for ci in 0..c {
            for y in 0..h2 {
                for x in 0..w2 {
                    out[(i, ci, y / 2, x / 2)] += g[(i, ci, y, x)];
                }
            }
        }
    }
    out
}

/// 2x2 average-pool downsampling (requires even spatial dims).
pub fn downsample2x(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "downsample2x needs even dims, got {h}x{w}");
    Array4::from_shape_fn((n, c, h / 2, w / 2), |(i, ci, y, x2)| {
        0.25 * (x[(i, ci, 2 * y, 2 * x2)]
            + x[(i, ci, 2 * y, 2 * x2 + 1)]
            + x[(i, ci, 2 * y + 1, 2 * x2)]
            + x[(i, ci, 2 * y + 1, 2 * x2 + 1)])
    })
}

/// Adjoint of [`downsample2x`].
pub fn downsample2x_backward(g: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = g.dim();
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(i, ci, y, x)| 0.25 * g[(i, ci, y / 2, x / 2)])
}
