//! 2D/3D convolutions via im2col + GEMM.
//!
//! Inputs are `[N][C][H][W]` stacks where `N` is the frame (or batch) axis.
//! Forward and backward parallelize over `N`; every parallel site writes to
//! disjoint outputs or reduces collected results in index order, so the
//! sequential build is bit-identical.

use ndarray::{s, Array2, Array4, ArrayView3, Ix2};
use rand_chacha::ChaCha8Rng;

use crate::par;

use super::init;
use super::param::{ParamId, ParamStore};
use super::BuildError;

pub(crate) fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Output positions whose kernel tap `kx` lands inside `0..w`.
fn valid_ox_range(w: usize, kx: usize, sw: usize, pw: usize, ow: usize) -> (usize, usize) {
    let lo = pw.saturating_sub(kx).div_ceil(sw).min(ow);
    if w + pw <= kx {
        return (lo, lo); // tap never lands in range
    }
    let hi = ((w - 1 + pw - kx) / sw + 1).min(ow);
    (lo, hi.max(lo))
}

/// Bias-free 2D convolution (all conv layers feed a batch norm).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

pub struct Conv2dCache {
    x: Array4<f64>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self, BuildError> {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let w = ps.add(
            &format!("{name}.w"),
            init::kaiming_uniform(rng, &[out_ch, fan_in], fan_in),
        )?;
        Ok(Conv2d {
            w,
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        })
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel.0, self.stride.0, self.pad.0),
            conv_out_dim(w, self.kernel.1, self.stride.1, self.pad.1),
        )
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array4<f64>) -> (Array4<f64>, Conv2dCache) {
        let y = self.forward_infer(ps, x);
        (y, Conv2dCache { x: x.clone() })
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_shape(h, w);
        let weight = ps.value(self.w).view().into_dimensionality::<Ix2>().unwrap();
        let frames = par::map_indexed(n, |i| {
            let cols = im2col(
                &x.index_axis(ndarray::Axis(0), i),
                self.kernel,
                self.stride,
                self.pad,
                (oh, ow),
            );
            weight.dot(&cols)
        });
        let mut y = Array4::zeros((n, self.out_ch, oh, ow));
        for (i, frame) in frames.into_iter().enumerate() {
            y.slice_mut(s![i, .., .., ..])
                .assign(&frame.into_shape_with_order((self.out_ch, oh, ow)).unwrap());
        }
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &Conv2dCache,
        grad_out: &Array4<f64>,
    ) -> Array4<f64> {
        let x = &cache.x;
        let (n, _, h, w) = x.dim();
        let (_, _, oh, ow) = grad_out.dim();
        let weight = ps
            .value(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        // Per-frame weight-gradient contributions and input gradients are
        // independent; contributions are summed in frame order afterwards.
        let per_frame = par::map_indexed(n, |i| {
            let cols = im2col(
                &x.index_axis(ndarray::Axis(0), i),
                self.kernel,
                self.stride,
                self.pad,
                (oh, ow),
            );
            let go = grad_out
                .slice(s![i, .., .., ..])
                .into_shape_with_order((self.out_ch, oh * ow))
                .unwrap()
                .to_owned();
            let grad_w = go.dot(&cols.t());
            let dcols = weight.t().dot(&go);
            let dx = col2im(
                &dcols,
                (self.in_ch, h, w),
                self.kernel,
                self.stride,
                self.pad,
                (oh, ow),
            );
            (grad_w, dx)
        });
        let mut grad_w = Array2::zeros((self.out_ch, self.in_ch * self.kernel.0 * self.kernel.1));
        let mut dx = Array4::zeros(x.dim());
        for (i, (gw, dxi)) in per_frame.into_iter().enumerate() {
            grad_w += &gw;
            dx.slice_mut(s![i, .., .., ..]).assign(&dxi);
        }
        ps.grad_add(self.w, grad_w.into_dyn().view());
        dx
    }
}

/// Patch matrix `[(C kh kw)] x [(OH OW)]` for one image.
fn im2col(
    x: &ArrayView3<f64>,
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
    out: (usize, usize),
) -> Array2<f64> {
    let (c_in, h, w) = x.dim();
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = pad;
    let (oh, ow) = out;
    let src = x.to_owned();
    let src = src.as_slice().expect("contiguous image");
    let mut cols = Array2::zeros((c_in * kh * kw, oh * ow));
    {
        let dst = cols.as_slice_mut().expect("contiguous cols");
        for c in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let row_base = row * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_base = (c * h + iy as usize) * w;
                        let dst_base = row_base + oy * ow;
                        // Valid ox range: 0 <= ox*sw + kx - pw < w.
                        let (ox_lo, ox_hi) = valid_ox_range(w, kx, sw, pw, ow);
                        let mut ix = (ox_lo * sw + kx) as isize - pw as isize;
                        for ox in ox_lo..ox_hi {
                            dst[dst_base + ox] = src[src_base + ix as usize];
                            ix += sw as isize;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter a patch-matrix gradient back onto the image grid.
fn col2im(
    dcols: &Array2<f64>,
    img_dim: (usize, usize, usize),
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
    out: (usize, usize),
) -> ndarray::Array3<f64> {
    let (c_in, h, w) = img_dim;
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = pad;
    let (oh, ow) = out;
    let src = dcols.as_slice().expect("contiguous dcols");
    let mut img = ndarray::Array3::zeros((c_in, h, w));
    {
        let dst = img.as_slice_mut().expect("contiguous image");
        for c in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let row_base = row * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_base = (c * h + iy as usize) * w;
                        let src_base = row_base + oy * ow;
                        let (ox_lo, ox_hi) = valid_ox_range(w, kx, sw, pw, ow);
                        let mut ix = (ox_lo * sw + kx) as isize - pw as isize;
                        for ox in ox_lo..ox_hi {
                            dst[dst_base + ix as usize] += src[src_base + ox];
                            ix += sw as isize;
                        }
                    }
                }
            }
        }
    }
    img
}

/// 3D convolution over `(time, height, width)` with temporal padding that
/// preserves the frame count. Used once, as the visual stem.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub w: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    /// `(kt, kh, kw)`; `kt` must be odd, time is padded by `kt / 2`.
    pub kernel: (usize, usize, usize),
    pub spatial_stride: usize,
    pub spatial_pad: usize,
}

pub struct Conv3dCache {
    x: Array4<f64>,
}

impl Conv3d {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize, usize),
        spatial_stride: usize,
        spatial_pad: usize,
    ) -> Result<Self, BuildError> {
        assert!(kernel.0 % 2 == 1, "temporal kernel must be odd");
        let fan_in = in_ch * kernel.0 * kernel.1 * kernel.2;
        let w = ps.add(
            &format!("{name}.w"),
            init::kaiming_uniform(rng, &[out_ch, fan_in], fan_in),
        )?;
        Ok(Conv3d {
            w,
            in_ch,
            out_ch,
            kernel,
            spatial_stride,
            spatial_pad,
        })
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_dim(h, self.kernel.1, self.spatial_stride, self.spatial_pad),
            conv_out_dim(w, self.kernel.2, self.spatial_stride, self.spatial_pad),
        )
    }

    /// Gather the `kt` temporally neighbouring frames of output frame `t`
    /// into one patch matrix (time-padded with zeros at the boundaries).
    fn frame_cols(&self, x: &Array4<f64>, t: usize, oh: usize, ow: usize) -> Array2<f64> {
        let (frames, c, _, _) = x.dim();
        let (kt, kh, kw) = self.kernel;
        let half = kt / 2;
        let rows_per_frame = c * kh * kw;
        let mut cols = Array2::zeros((rows_per_frame * kt, oh * ow));
        for dt in 0..kt {
            let ti = t as isize + dt as isize - half as isize;
            if ti < 0 || ti >= frames as isize {
                continue;
            }
            let sub = im2col(
                &x.index_axis(ndarray::Axis(0), ti as usize),
                (kh, kw),
                (self.spatial_stride, self.spatial_stride),
                (self.spatial_pad, self.spatial_pad),
                (oh, ow),
            );
            cols.slice_mut(s![dt * rows_per_frame..(dt + 1) * rows_per_frame, ..])
                .assign(&sub);
        }
        cols
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array4<f64>) -> (Array4<f64>, Conv3dCache) {
        let y = self.forward_infer(ps, x);
        (y, Conv3dCache { x: x.clone() })
    }

    pub fn forward_infer(&self, ps: &ParamStore, x: &Array4<f64>) -> Array4<f64> {
        let (frames, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv3d input channels");
        let (oh, ow) = self.out_shape(h, w);
        let weight = ps.value(self.w).view().into_dimensionality::<Ix2>().unwrap();
        let outs = par::map_indexed(frames, |t| weight.dot(&self.frame_cols(x, t, oh, ow)));
        let mut y = Array4::zeros((frames, self.out_ch, oh, ow));
        for (t, frame) in outs.into_iter().enumerate() {
            y.slice_mut(s![t, .., .., ..])
                .assign(&frame.into_shape_with_order((self.out_ch, oh, ow)).unwrap());
        }
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &Conv3dCache,
        grad_out: &Array4<f64>,
    ) -> Array4<f64> {
        let x = &cache.x;
        let (frames, c, h, w) = x.dim();
        let (_, _, oh, ow) = grad_out.dim();
        let (kt, kh, kw) = self.kernel;
        let half = kt / 2;
        let rows_per_frame = c * kh * kw;
        let weight = ps
            .value(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        let per_frame = par::map_indexed(frames, |t| {
            let cols = self.frame_cols(x, t, oh, ow);
            let go = grad_out
                .slice(s![t, .., .., ..])
                .into_shape_with_order((self.out_ch, oh * ow))
                .unwrap()
                .to_owned();
            let grad_w = go.dot(&cols.t());
            let dcols = weight.t().dot(&go);
            (grad_w, dcols)
        });
        let mut grad_w = Array2::zeros((self.out_ch, rows_per_frame * kt));
        let mut dx = Array4::zeros(x.dim());
        for (t, (gw, dcols)) in per_frame.into_iter().enumerate() {
            grad_w += &gw;
            // Scatter each temporal slice of the patch gradient back to the
            // input frame it was read from.
            for dt in 0..kt {
                let ti = t as isize + dt as isize - half as isize;
                if ti < 0 || ti >= frames as isize {
                    continue;
                }
                let sub = dcols
                    .slice(s![dt * rows_per_frame..(dt + 1) * rows_per_frame, ..])
                    .to_owned();
                let dximg = col2im(
                    &sub,
                    (c, h, w),
                    (kh, kw),
                    (self.spatial_stride, self.spatial_stride),
                    (self.spatial_pad, self.spatial_pad),
                    (oh, ow),
                );
                let mut tgt = dx.slice_mut(s![ti as usize, .., .., ..]);
                tgt += &dximg;
            }
        }
        ps.grad_add(self.w, grad_w.into_dyn().view());
        dx
    }
}

/// 1x1 convolution over a `[C][T]` sequence: a per-timestep linear map with
/// bias.
#[derive(Debug, Clone)]
pub struct PointwiseConv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

pub struct PointwiseCache {
    x: Array2<f64>,
}

impl PointwiseConv1d {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
    ) -> Result<Self, BuildError> {
        let w = ps.add(
            &format!("{name}.w"),
            init::kaiming_uniform(rng, &[out_ch, in_ch], in_ch),
        )?;
        let b = ps.add(&format!("{name}.b"), init::zeros(&[out_ch]))?;
        Ok(PointwiseConv1d {
            w,
            b,
            in_ch,
            out_ch,
        })
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, PointwiseCache) {
        let y = self.forward_infer(ps, x);
        (y, PointwiseCache { x: x.clone() })
    }

    /// `x` is `[C][T]`, output `[C'][T]`.
    pub fn forward_infer(&self, ps: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.nrows(), self.in_ch);
        let w = ps.value(self.w).view().into_dimensionality::<Ix2>().unwrap();
        let b = ps.value(self.b);
        let mut y = w.dot(x);
        for (mut row, bias) in y.rows_mut().into_iter().zip(b.iter()) {
            row += *bias;
        }
        y
    }

    pub fn backward(
        &self,
        ps: &mut ParamStore,
        cache: &PointwiseCache,
        grad_out: &Array2<f64>,
    ) -> Array2<f64> {
        let w = ps
            .value(self.w)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
            .to_owned();
        let grad_w = grad_out.dot(&cache.x.t());
        let grad_b = grad_out.sum_axis(ndarray::Axis(1));
        ps.grad_add(self.w, grad_w.into_dyn().view());
        ps.grad_add(self.b, grad_b.into_dyn().view());
        w.t().dot(grad_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array4, ArrayD};
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn conv2d_identity_kernel_passes_through() {
        let mut ps = ParamStore::new();
        let mut r = rng();
        let conv = Conv2d::new(&mut ps, &mut r, "c", 1, 1, (3, 3), (1, 1), (1, 1)).unwrap();
        // Kernel with a single 1 in the center.
        let mut w = ArrayD::zeros(vec![1, 9]);
        w[[0, 4]] = 1.0;
        ps.value_mut(conv.w).assign(&w);
        let x = Array4::from_shape_fn((2, 1, 5, 5), |(n, _, y, xx)| {
            (n * 25 + y * 5 + xx) as f64 * 0.1
        });
        let (y, _) = conv.forward(&ps, &x);
        assert_eq!(y.dim(), (2, 1, 5, 5));
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_matches_direct_convolution() {
        let mut ps = ParamStore::new();
        let mut r = rng();
        let conv = Conv2d::new(&mut ps, &mut r, "c", 2, 3, (3, 3), (2, 2), (1, 1)).unwrap();
        let x = Array4::from_shape_fn((1, 2, 6, 7), |(_, c, y, xx)| {
            ((c * 61 + y * 7 + xx) % 13) as f64 * 0.21 - 0.7
        });
        let (y, _) = conv.forward(&ps, &x);
        let w = ps.value(conv.w).clone();
        let (oh, ow) = conv.out_shape(6, 7);
        assert_eq!(y.dim(), (1, 3, oh, ow));
        for co in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && iy < 6 && ix >= 0 && ix < 7 {
                                    acc += w[[co, (c * 3 + ky) * 3 + kx]]
                                        * x[[0, c, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    assert!((y[[0, co, oy, ox]] - acc).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn conv3d_preserves_frame_count() {
        let mut ps = ParamStore::new();
        let mut r = rng();
        let conv = Conv3d::new(&mut ps, &mut r, "c3", 3, 4, (5, 7, 7), 2, 3).unwrap();
        let x = Array4::from_shape_fn((6, 3, 16, 16), |(t, c, y, xx)| {
            ((t + c + y + xx) % 7) as f64 * 0.1
        });
        let (y, _) = conv.forward(&ps, &x);
        assert_eq!(y.dim(), (6, 4, 8, 8));
    }
}
