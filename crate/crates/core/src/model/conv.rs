//! Strided 2-D convolution kernels used by the convolutional encoder path
//! and its mirrored transposed-convolution decoder.
//!
//! Feature maps are flattened channel-major: index = (c·H + y)·W + x. A
//! convolution layer's weights live in a (out_c × in_c·kh·kw) matrix so the
//! per-sample forward is a plain matrix product against an im2col buffer.

use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    /// "Same" zero padding: output extent is ceil(input / stride).
    pub fn same(in_c: usize, in_h: usize, in_w: usize, out_c: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad_h = ((out_h - 1) * stride + kh).saturating_sub(in_h);
        let pad_w = ((out_w - 1) * stride + kw).saturating_sub(in_w);
        ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            out_h,
            out_w,
            kh,
            kw,
            stride,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_dim(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn patch_dim(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Extract the (patch_dim × positions) im2col buffer for one flattened
/// sample; out-of-bounds reads are zero.
fn im2col(geom: &ConvGeom, sample: &[f64]) -> Matrix {
    let mut p = Matrix::zeros(geom.patch_dim(), geom.positions());
    for oy in 0..geom.out_h {
        for ox in 0..geom.out_w {
            let pos = oy * geom.out_w + ox;
            for c in 0..geom.in_c {
                for ky in 0..geom.kh {
                    let y = (oy * geom.stride + ky) as isize - geom.pad_top as isize;
                    if y < 0 || y >= geom.in_h as isize {
                        continue;
                    }
                    for kx in 0..geom.kw {
                        let x = (ox * geom.stride + kx) as isize - geom.pad_left as isize;
                        if x < 0 || x >= geom.in_w as isize {
                            continue;
                        }
                        let src = (c * geom.in_h + y as usize) * geom.in_w + x as usize;
                        let dst = (c * geom.kh + ky) * geom.kw + kx;
                        p.set(dst, pos, sample[src]);
                    }
                }
            }
        }
    }
    p
}

/// Adjoint of `im2col`: scatter-add patch columns back into a flattened map.
fn col2im(geom: &ConvGeom, patches: &Matrix, out: &mut [f64]) {
    for oy in 0..geom.out_h {
        for ox in 0..geom.out_w {
            let pos = oy * geom.out_w + ox;
            for c in 0..geom.in_c {
                for ky in 0..geom.kh {
                    let y = (oy * geom.stride + ky) as isize - geom.pad_top as isize;
                    if y < 0 || y >= geom.in_h as isize {
                        continue;
                    }
                    for kx in 0..geom.kw {
                        let x = (ox * geom.stride + kx) as isize - geom.pad_left as isize;
                        if x < 0 || x >= geom.in_w as isize {
                            continue;
                        }
                        let dst = (c * geom.in_h + y as usize) * geom.in_w + x as usize;
                        let src = (c * geom.kh + ky) * geom.kw + kx;
                        out[dst] += patches.get(src, pos);
                    }
                }
            }
        }
    }
}

/// Convolution forward over a batch of flattened columns; bias and
/// activation are applied by the layer wrapper.
pub fn conv_forward(geom: &ConvGeom, w: &Matrix, x: &Matrix) -> Matrix {
    let n = x.cols();
    let mut y = Matrix::zeros(geom.out_dim(), n);
    for j in 0..n {
        let patches = im2col(geom, &x.col(j));
        let maps = w.matmul(&patches); // out_c × positions
        for c in 0..geom.out_c {
            for pos in 0..geom.positions() {
                y.set(c * geom.positions() + pos, j, maps.get(c, pos));
            }
        }
    }
    y
}

/// Gradient of the convolution with respect to its input; also the forward
/// map of the mirrored transposed convolution.
pub fn conv_backward_input(geom: &ConvGeom, w: &Matrix, dy: &Matrix) -> Matrix {
    let n = dy.cols();
    let mut dx = Matrix::zeros(geom.in_dim(), n);
    for j in 0..n {
        let maps = reshape_maps(geom, &dy.col(j));
        let patches = w.transpose().matmul(&maps);
        let mut flat = vec![0.0; geom.in_dim()];
        col2im(geom, &patches, &mut flat);
        dx.set_col(j, &flat);
    }
    dx
}

/// Weight gradient: accumulates `dY · patches(X)ᵀ` over the batch. For the
/// transposed convolution, call with the roles swapped (its input in
/// `dy_like`, the upstream gradient in `x_like`).
pub fn conv_backward_weights(geom: &ConvGeom, dy_like: &Matrix, x_like: &Matrix) -> Matrix {
    let n = dy_like.cols();
    let mut dw = Matrix::zeros(geom.out_c, geom.patch_dim());
    for j in 0..n {
        let maps = reshape_maps(geom, &dy_like.col(j));
        let patches = im2col(geom, &x_like.col(j));
        dw.axpy(1.0, &maps.matmul(&patches.transpose()));
    }
    dw
}

fn reshape_maps(geom: &ConvGeom, flat: &[f64]) -> Matrix {
    let positions = geom.positions();
    Matrix::from_fn(geom.out_c, positions, |c, pos| flat[c * positions + pos])
}
