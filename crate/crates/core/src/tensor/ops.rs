//! Raw kernels shared by the tape and the untracked entry points.

use super::gemm::{gemm, Mat};
use super::Tensor;
use crate::{Error, Result};

/// Output extent of a convolution window sweep.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("input {input:?} and kernels {kernel:?} must both be rank 4"),
            ));
        }
        if input[1] != kernel[1] {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input {input:?} has {} channels but kernels {kernel:?} expect {}",
                    input[1], kernel[1]
                ),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        let (h, w, kh, kw) = (input[2], input[3], kernel[2], kernel[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("kernels {kernel:?} larger than padded input {input:?} (pad {pad})"),
            ));
        }
        Ok(Self {
            n: input[0],
            c: input[1],
            h,
            w,
            o: kernel[0],
            kh,
            kw,
            stride,
            pad,
            ho: conv_out_extent(h, kh, stride, pad),
            wo: conv_out_extent(w, kw, stride, pad),
        })
    }

    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.n * self.ho * self.wo
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.o, self.ho, self.wo]
    }
}

/// Unfolds input windows into a `[C*kh*kw, N*Ho*Wo]` matrix.
pub(crate) fn im2col(x: &[f32], g: &ConvGeom) -> Vec<f32> {
    let np = g.positions();
    let plane = g.ho * g.wo;
    let mut cols = vec![0.0; g.patch() * np];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst_row = &mut cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let src = &x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                    let dst = &mut dst_row[n * plane..(n + 1) * plane];
                    for oh in 0..g.ho {
                        let ih = (oh * g.stride + i) as isize - g.pad as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[ih as usize * g.w..][..g.w];
                        let dst_row = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                        for (ow, d) in dst_row.iter_mut().enumerate() {
                            let iw = (ow * g.stride + j) as isize - g.pad as isize;
                            if iw >= 0 && iw < g.w as isize {
                                *d = src_row[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back to input layout.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom) -> Vec<f32> {
    let np = g.positions();
    let plane = g.ho * g.wo;
    let mut x = vec![0.0; g.n * g.c * g.h * g.w];
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src_row = &cols[row * np..(row + 1) * np];
                for n in 0..g.n {
                    let dst = &mut x[(n * g.c + c) * g.h * g.w..][..g.h * g.w];
                    let src = &src_row[n * plane..(n + 1) * plane];
                    for oh in 0..g.ho {
                        let ih = (oh * g.stride + i) as isize - g.pad as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[ih as usize * g.w..][..g.w];
                        for ow in 0..g.wo {
                            let iw = (ow * g.stride + j) as isize - g.pad as isize;
                            if iw >= 0 && iw < g.w as isize {
                                dst_row[iw as usize] += src[oh * g.wo + ow];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// `[O, N*P]` (channel-major) to `[N, O, P]`.
fn channel_major_to_batch(mat: &[f32], n: usize, o: usize, p: usize) -> Vec<f32> {
    let mut out = vec![0.0; n * o * p];
    for oc in 0..o {
        for b in 0..n {
            out[(b * o + oc) * p..][..p].copy_from_slice(&mat[oc * n * p + b * p..][..p]);
        }
    }
    out
}

fn batch_to_channel_major(x: &[f32], n: usize, o: usize, p: usize) -> Vec<f32> {
    let mut mat = vec![0.0; n * o * p];
    for b in 0..n {
        for oc in 0..o {
            mat[oc * n * p + b * p..][..p].copy_from_slice(&x[(b * o + oc) * p..][..p]);
        }
    }
    mat
}

/// Forward pass; returns the output and the unfolded input for reuse.
pub(crate) fn conv_forward(x: &[f32], k: &[f32], g: &ConvGeom) -> (Vec<f32>, Vec<f32>) {
    let cols = im2col(x, g);
    let np = g.positions();
    let mut mat = vec![0.0; g.o * np];
    gemm(
        g.o,
        g.patch(),
        np,
        Mat::rows(k, g.patch()),
        Mat::rows(&cols, np),
        0.0,
        &mut mat,
    );
    (channel_major_to_batch(&mat, g.n, g.o, g.ho * g.wo), cols)
}

/// Gradients with respect to the input and/or kernels.
pub(crate) fn conv_backward(
    dout: &[f32],
    k: &[f32],
    cols: &[f32],
    g: &ConvGeom,
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let np = g.positions();
    let dmat = batch_to_channel_major(dout, g.n, g.o, g.ho * g.wo);
    let dk = want_kernel.then(|| {
        let mut dk = vec![0.0; g.o * g.patch()];
        gemm(
            g.o,
            np,
            g.patch(),
            Mat::rows(&dmat, np),
            Mat::transposed(cols, np),
            0.0,
            &mut dk,
        );
        dk
    });
    let dx = want_input.then(|| {
        let mut dcols = vec![0.0; g.patch() * np];
        gemm(
            g.patch(),
            g.o,
            np,
            Mat::transposed(k, g.patch()),
            Mat::rows(&dmat, np),
            0.0,
            &mut dcols,
        );
        col2im(&dcols, g)
    });
    (dx, dk)
}

/// Cross-correlation of `input` `[N,Cin,H,W]` with `kernels` `[Cout,Cin,kh,kw]`
/// (no kernel flip). Output extents are `floor((H + 2p - kh) / stride) + 1`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = ConvGeom::new(input.shape(), kernels.shape(), stride, padding)?;
    let (out, _) = conv_forward(input.data(), kernels.data(), &g);
    Tensor::new(&g.out_shape(), out)
}
