//! Per-channel batch normalization over the `(N, H, W)` axes.

use crate::error::{check_extent, Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Running mean/variance buffers updated in training mode and consumed in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub enum BatchNormMode<'a, T> {
    /// Normalize with batch statistics and fold them into `running`:
    /// `running <- momentum * running + (1 - momentum) * batch`.
    Train {
        running: &'a mut RunningStats<T>,
        momentum: T,
    },
    Eval { running: &'a RunningStats<T> },
}

/// Forward results kept for the backward pass.
pub struct BatchNormSaved<T> {
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

/// Sum over eight interleaved partial accumulators so the loop can vectorize.
fn lane_sum<T: Real>(xs: &[T], f: impl Fn(T) -> T) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder().iter().fold(T::zero(), |a, &v| a + f(v));
    for chunk in chunks {
        for (a, &v) in acc.iter_mut().zip(chunk) {
            *a += f(v);
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BatchNormMode<'_, T>,
    eps: T,
) -> Result<(Tensor<T>, BatchNormSaved<T>)> {
    let (n, c, h, w) = input.dims4("batchnorm2d")?;
    check_extent("batchnorm2d", "gamma channels", c, gamma.len())?;
    check_extent("batchnorm2d", "beta channels", c, beta.len())?;
    if eps <= T::zero() {
        return Err(TensorError::InvalidArgument {
            op: "batchnorm2d",
            reason: "eps must be positive".into(),
        });
    }
    let plane = h * w;
    let count = T::of((n * plane) as f64);
    let x = input.data();
    let planes = |ch: usize| (0..n).map(move |b| &x[(b * c + ch) * plane..(b * c + ch + 1) * plane]);

    let (mean, var, train) = match mode {
        BatchNormMode::Train { running, momentum } => {
            check_extent("batchnorm2d", "running stats channels", c, running.channels())?;
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let m0 = planes(ch).map(|p| lane_sum(p, |v| v)).sum::<T>() / count;
                // second pass pulls the mean back onto constant channels exactly
                let shift = planes(ch).map(|p| lane_sum(p, |v| v - m0)).sum::<T>();
                let m = m0 + shift / count;
                mean[ch] = m;
                var[ch] = planes(ch).map(|p| lane_sum(p, |v| (v - m) * (v - m))).sum::<T>() / count;
            }
            let keep = T::one() - momentum;
            for ch in 0..c {
                running.mean[ch] = momentum * running.mean[ch] + keep * mean[ch];
                running.var[ch] = momentum * running.var[ch] + keep * var[ch];
            }
            (mean, var, true)
        }
        BatchNormMode::Eval { running } => {
            check_extent("batchnorm2d", "running stats channels", c, running.channels())?;
            (running.mean.clone(), running.var.clone(), false)
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut normalized = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let (g, bt, mu, is) = (gamma.data()[ch], beta.data()[ch], mean[ch], inv_std[ch]);
            let src = &x[range.clone()];
            for ((xh, o), &v) in normalized[range.clone()].iter_mut().zip(&mut out[range]).zip(src) {
                *xh = (v - mu) * is;
                *o = g * *xh + bt;
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        BatchNormSaved {
            normalized,
            inv_std,
            train,
        },
    ))
}

/// Returns `(d input, d gamma, d beta)`.
pub fn batchnorm_backward<T: Real>(
    shape: &[usize],
    gamma: &Tensor<T>,
    saved: &BatchNormSaved<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let plane = h * w;
    let m = T::of((n * plane) as f64);
    let g = grad_out.data();
    let xh = &saved.normalized;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let (gs, xs) = (&g[range.clone()], &xh[range]);
            dgamma[ch] += gs.iter().zip(xs).map(|(&gi, &xi)| gi * xi).sum::<T>();
            dbeta[ch] += gs.iter().copied().sum::<T>();
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    for b in 0..n {
        for ch in 0..c {
            let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let scale = gamma.data()[ch] * saved.inv_std[ch];
            let (gs, xs) = (&g[range.clone()], &xh[range.clone()]);
            let dst = &mut dx[range];
            if saved.train {
                let (db, dg) = (dbeta[ch] / m, dgamma[ch] / m);
                for ((d, &gi), &xi) in dst.iter_mut().zip(gs).zip(xs) {
                    *d = scale * (gi - db - xi * dg);
                }
            } else {
                for (d, &gi) in dst.iter_mut().zip(gs) {
                    *d = scale * gi;
                }
            }
        }
    }
    (
        Tensor::new(shape.to_vec(), dx).expect("shape preserved"),
        Tensor::new(vec![c], dgamma).expect("channel vector"),
        Tensor::new(vec![c], dbeta).expect("channel vector"),
    )
}
