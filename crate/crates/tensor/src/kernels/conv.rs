//! 2-D cross-correlation lowered to matrix products through an im2col buffer.

use crate::error::{check_extent, Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Validates operand shapes and derives the output extent.
    pub fn infer<T: Real>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (n, cin, h, w) = input.dims4("conv2d")?;
        let (cout, wcin, kh, kw) = weight.dims4("conv2d")?;
        check_extent("conv2d", "input channels", wcin, cin)?;
        if let Some(b) = bias {
            crate::error::check_rank("conv2d", 1, b.rank())?;
            check_extent("conv2d", "bias", cout, b.shape()[0])?;
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                reason: "stride must be positive".into(),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv2d",
                reason: format!("kernel extents must be odd, got {kh}x{kw}"),
            });
        }
        let out_h = out_extent("height", h, kh, stride, pad)?;
        let out_w = out_extent("width", w, kw, stride, pad)?;
        Ok(Self {
            batch: n,
            in_channels: cin,
            out_channels: cout,
            height: h,
            width: w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.pad == 0
    }
}

fn out_extent(axis: &'static str, size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < kernel {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            reason: format!("padded {axis} {padded} smaller than kernel {kernel}"),
        });
    }
    let span = padded - kernel;
    if span % stride != 0 {
        return Err(TensorError::NonIntegralExtent {
            op: "conv2d",
            axis,
            numerator: span,
            stride,
        });
    }
    Ok(span / stride + 1)
}

/// Output columns `[lo, hi)` whose kernel tap `kj` lands inside the image row (stride 1).
#[inline]
fn unit_stride_span(g: &ConvGeometry, kj: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kj).min(g.out_w);
    let hi = (g.width + g.pad).saturating_sub(kj).min(g.out_w).max(lo);
    (lo, hi)
}

/// Output rows per im2col band, sized so a band of patches stays cache resident.
const BAND_PIXELS: usize = 1024;

fn band_rows(g: &ConvGeometry) -> usize {
    (BAND_PIXELS / g.out_w.max(1)).clamp(1, g.out_h.max(1))
}

/// Patch matrix for output rows `rows`, laid out `[patch_len, rows.len() * out_w]`.
fn im2col<T: Real>(g: &ConvGeometry, image: &[T], rows: std::ops::Range<usize>, cols: &mut [T]) {
    let p = rows.len() * g.out_w;
    let pad = g.pad as isize;
    for c in 0..g.in_channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let out = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = unit_stride_span(g, kj);
                for (local, oy) in rows.clone().enumerate() {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    let dst = &mut out[local * g.out_w..(local + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    if g.stride == 1 {
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if lo < hi {
                            let shift = lo + kj - g.pad;
                            dst[lo..hi].copy_from_slice(&src[shift..shift + hi - lo]);
                        }
                        continue;
                    }
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        *d = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`] for the same band, accumulated into `image`.
fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], rows: std::ops::Range<usize>, image: &mut [T]) {
    let p = rows.len() * g.out_w;
    let pad = g.pad as isize;
    for c in 0..g.in_channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = unit_stride_span(g, kj);
                for (local, oy) in rows.clone().enumerate() {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    if g.stride == 1 {
                        if lo < hi {
                            let shift = lo + kj - g.pad;
                            let row = &src[local * g.out_w + lo..local * g.out_w + hi];
                            for (d, &v) in dst[shift..shift + hi - lo].iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += src[local * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::infer(input, weight, bias, stride, pad)?;
    let (k, p) = (g.patch_len(), g.out_pixels());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * p;
    let mut out = vec![T::zero(); g.batch * out_len];
    let band = if g.is_pointwise() { g.out_h } else { band_rows(&g) };
    let cols_len = if g.is_pointwise() { 0 } else { k * band * g.out_w };
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    T::with_scratch(cols_len, 0, |cols, _| {
        for n in 0..g.batch {
            let image = &input.data()[n * in_len..(n + 1) * in_len];
            let dst = &mut out[n * out_len..(n + 1) * out_len];
            if let Some(b) = bias {
                for (co, chunk) in dst.chunks_mut(p).enumerate() {
                    chunk.fill(b.data()[co]);
                }
            }
            for r0 in (0..g.out_h).step_by(band) {
                let rows = r0..(r0 + band).min(g.out_h);
                let (offset, bp) = (r0 * g.out_w, rows.len() * g.out_w);
                let (rhs, rhs_stride): (&[T], usize) = if g.is_pointwise() {
                    (&image[offset..], p)
                } else {
                    im2col(&g, image, rows, cols);
                    (&cols[..k * bp], bp)
                };
                T::gemm(
                    g.out_channels,
                    k,
                    bp,
                    weight.data(),
                    (k as isize, 1),
                    rhs,
                    (rhs_stride as isize, 1),
                    beta,
                    &mut dst[offset..],
                    (p as isize, 1),
                );
            }
        }
    });
    Tensor::new(vec![g.batch, g.out_channels, g.out_h, g.out_w], out)
}

/// Gradients of a convolution with respect to input, weight and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need: (bool, bool, bool),
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::infer(input, weight, None, stride, pad)?;
    let (k, p) = (g.patch_len(), g.out_pixels());
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * p;
    let (need_x, need_w, need_b) = need;

    let mut gx = need_x.then(|| vec![T::zero(); input.len()]);
    let mut gw = need_w.then(|| vec![T::zero(); weight.len()]);
    let mut gb = need_b.then(|| vec![T::zero(); g.out_channels]);
    let band = if g.is_pointwise() { g.out_h } else { band_rows(&g) };
    let band_len = if g.is_pointwise() { 0 } else { k * band * g.out_w };
    let cols_len = if need_w { band_len } else { 0 };
    let gcols_len = if need_x { band_len } else { 0 };
    T::with_scratch(cols_len, gcols_len, |cols, gcols| {
        for n in 0..g.batch {
            let image = &input.data()[n * in_len..(n + 1) * in_len];
            let go = &grad_out.data()[n * out_len..(n + 1) * out_len];
            if let Some(gb) = gb.as_mut() {
                for (co, chunk) in go.chunks(p).enumerate() {
                    gb[co] += chunk.iter().copied().sum::<T>();
                }
            }
            for r0 in (0..g.out_h).step_by(band) {
                let rows = r0..(r0 + band).min(g.out_h);
                let (offset, bp) = (r0 * g.out_w, rows.len() * g.out_w);
                if let Some(gw) = gw.as_mut() {
                    let (patches, stride): (&[T], usize) = if g.is_pointwise() {
                        (&image[offset..], p)
                    } else {
                        im2col(&g, image, rows.clone(), cols);
                        (&cols[..k * bp], bp)
                    };
                    T::gemm(
                        g.out_channels,
                        bp,
                        k,
                        &go[offset..],
                        (p as isize, 1),
                        patches,
                        (1, stride as isize),
                        T::one(),
                        gw,
                        (k as isize, 1),
                    );
                }
                if let Some(gx) = gx.as_mut() {
                    let dst = &mut gx[n * in_len..(n + 1) * in_len];
                    if g.is_pointwise() {
                        T::gemm(
                            k,
                            g.out_channels,
                            bp,
                            weight.data(),
                            (1, k as isize),
                            &go[offset..],
                            (p as isize, 1),
                            T::zero(),
                            &mut dst[offset..],
                            (p as isize, 1),
                        );
                    } else {
                        T::gemm(
                            k,
                            g.out_channels,
                            bp,
                            weight.data(),
                            (1, k as isize),
                            &go[offset..],
                            (p as isize, 1),
                            T::zero(),
                            &mut gcols[..k * bp],
                            (bp as isize, 1),
                        );
                        col2im(&g, &gcols[..k * bp], rows, dst);
                    }
                }
            }
        }
    });
    Ok(ConvGrads {
        input: gx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?,
        weight: gw.map(|d| Tensor::new(weight.shape().to_vec(), d)).transpose()?,
        bias: gb.map(|d| Tensor::new(vec![g.out_channels], d)).transpose()?,
    })
}
