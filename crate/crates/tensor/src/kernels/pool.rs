//! Spatial pooling: the fixed 3x3 average pool used inside inception blocks and the
//! adaptive rows x cols partition pool with its piecewise-constant inverse.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Boundaries `floor(i * extent / parts)` for `i = 0..=parts`.
pub fn partition_bounds(extent: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|i| i * extent / parts).collect()
}

fn check_grid(op: &'static str, h: usize, w: usize, rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || rows > h || cols > w {
        return Err(TensorError::InvalidArgument {
            op,
            reason: format!("grid {rows}x{cols} does not fit a {h}x{w} feature map"),
        });
    }
    Ok(())
}

pub fn partition_pool_forward<T: Real>(input: &Tensor<T>, rows: usize, cols: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("partition_avg_pool")?;
    check_grid("partition_avg_pool", h, w, rows, cols)?;
    let rb = partition_bounds(h, rows);
    let cb = partition_bounds(w, cols);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * rows * cols);
    for plane in x.chunks(h * w) {
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = T::zero();
                for y in rb[i]..rb[i + 1] {
                    for v in &plane[y * w + cb[j]..y * w + cb[j + 1]] {
                        acc += *v;
                    }
                }
                let area = (rb[i + 1] - rb[i]) * (cb[j + 1] - cb[j]);
                out.push(acc / T::of(area as f64));
            }
        }
    }
    Tensor::new(vec![n, c, rows, cols], out)
}

pub fn partition_pool_backward<T: Real>(grad_out: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let s = grad_out.shape();
    let (n, c, rows, cols) = (s[0], s[1], s[2], s[3]);
    let rb = partition_bounds(h, rows);
    let cb = partition_bounds(w, cols);
    let mut dx = vec![T::zero(); n * c * h * w];
    for (plane, g) in dx.chunks_mut(h * w).zip(grad_out.data().chunks(rows * cols)) {
        for i in 0..rows {
            for j in 0..cols {
                let area = (rb[i + 1] - rb[i]) * (cb[j + 1] - cb[j]);
                let share = g[i * cols + j] / T::of(area as f64);
                for y in rb[i]..rb[i + 1] {
                    plane[y * w + cb[j]..y * w + cb[j + 1]].fill(share);
                }
            }
        }
    }
    Tensor::new(vec![n, c, h, w], dx).expect("pool gradient shape")
}

/// Piecewise-constant upsampling of a partition grid to `h x w` pixels.
pub fn broadcast_forward<T: Real>(weights: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c, rows, cols) = weights.dims4("broadcast_partition_weights")?;
    check_grid("broadcast_partition_weights", h, w, rows, cols)?;
    let rb = partition_bounds(h, rows);
    let cb = partition_bounds(w, cols);
    let mut out = vec![T::zero(); n * c * h * w];
    for (plane, g) in out.chunks_mut(h * w).zip(weights.data().chunks(rows * cols)) {
        for i in 0..rows {
            for j in 0..cols {
                for y in rb[i]..rb[i + 1] {
                    plane[y * w + cb[j]..y * w + cb[j + 1]].fill(g[i * cols + j]);
                }
            }
        }
    }
    Tensor::new(vec![n, c, h, w], out)
}

pub fn broadcast_backward<T: Real>(grad_out: &Tensor<T>, rows: usize, cols: usize) -> Tensor<T> {
    let s = grad_out.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let rb = partition_bounds(h, rows);
    let cb = partition_bounds(w, cols);
    let mut dx = vec![T::zero(); n * c * rows * cols];
    for (g, plane) in dx.chunks_mut(rows * cols).zip(grad_out.data().chunks(h * w)) {
        for i in 0..rows {
            for j in 0..cols {
                let mut acc = T::zero();
                for y in rb[i]..rb[i + 1] {
                    for v in &plane[y * w + cb[j]..y * w + cb[j + 1]] {
                        acc += *v;
                    }
                }
                g[i * cols + j] = acc;
            }
        }
    }
    Tensor::new(vec![n, c, rows, cols], dx).expect("broadcast gradient shape")
}

/// 3x3 average pool, stride 1, zero padding 1, divisor always 9.
pub fn avg_pool3_forward<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("avg_pool3x3")?;
    let ninth = T::one() / T::of(9.0);
    let mut out = vec![T::zero(); n * c * h * w];
    if out.is_empty() {
        return Tensor::new(input.shape().to_vec(), out);
    }
    let mut rows = vec![T::zero(); h * w];
    for (dst, src) in out.chunks_mut(h * w).zip(input.data().chunks(h * w)) {
        // Horizontal 3-tap sums, then vertical 3-tap sums of those.
        for (r, s) in rows.chunks_mut(w).zip(src.chunks(w)) {
            r.copy_from_slice(s);
            for (o, &v) in r[1..].iter_mut().zip(&s[..w - 1]) {
                *o += v;
            }
            for (o, &v) in r[..w - 1].iter_mut().zip(&s[1..]) {
                *o += v;
            }
        }
        for y in 0..h {
            let d = &mut dst[y * w..(y + 1) * w];
            d.copy_from_slice(&rows[y * w..(y + 1) * w]);
            for yy in [y.wrapping_sub(1), y + 1] {
                if yy < h {
                    for (o, &v) in d.iter_mut().zip(&rows[yy * w..(yy + 1) * w]) {
                        *o += v;
                    }
                }
            }
            d.iter_mut().for_each(|v| *v *= ninth);
        }
    }
    Tensor::new(input.shape().to_vec(), out)
}

pub fn avg_pool3_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    // the zero-padded 3x3 box filter is self-adjoint
    avg_pool3_forward(grad_out).expect("rank-4 gradient")
}
