#![allow(dead_code)]

use gla_tensor::{Graph, Real, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-1.0..1.0)))
}

/// Central-difference gradient check of `build` with respect to every leaf value.
///
/// Returns the largest relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn max_relative_fd_error(
    leaves: &[Tensor<f64>],
    step: f64,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    fd_error(leaves, step, false, build)
}

/// Same check with the fourth-order five-point central stencil.
pub fn max_relative_fd_error_5pt(
    leaves: &[Tensor<f64>],
    step: f64,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    fd_error(leaves, step, true, build)
}

fn fd_error(
    leaves: &[Tensor<f64>],
    step: f64,
    five_point: bool,
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|v| g.param(v.clone())).collect();
        let loss = build(&mut g, &vars).expect("forward");
        g.value(loss).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|v| g.param(v.clone())).collect();
    let loss = build(&mut g, &vars).expect("forward");
    let grads = g.backward(loss).expect("backward");

    let mut worst = 0.0f64;
    let mut work = leaves.to_vec();
    for (li, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(leaves[li].shape()));
        for j in 0..leaves[li].len() {
            let orig = work[li].data()[j];
            let mut at = |offset: f64| {
                work[li].data_mut()[j] = orig + offset;
                let v = eval(&work);
                work[li].data_mut()[j] = orig;
                v
            };
            let numeric = if five_point {
                (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step)
            } else {
                (at(step) - at(-step)) / (2.0 * step)
            };
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

/// Direct six-loop cross-correlation with zero padding.
pub fn conv_oracle(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &[f64],
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.at4(bi, ci, iy as usize, ix as usize) * w.at4(co, ci, ky, kx);
                                }
                            }
                        }
                    }
                    out.set4(bi, co, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Per-channel mean/variance normalization computed with scalar loops.
pub fn batchnorm_oracle(x: &Tensor<f64>, gamma: &[f64], beta: &[f64], eps: f64) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        let mut vals = Vec::new();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    vals.push(x.at4(b, ch, y, xx));
                }
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let v = (x.at4(b, ch, y, xx) - mean) / (var + eps).sqrt();
                    out.set4(b, ch, y, xx, gamma[ch] * v + beta[ch]);
                }
            }
        }
    }
    out
}

/// Mean over the explicitly enumerated index ranges of each partition.
pub fn partition_pool_oracle(x: &Tensor<f64>, rows: usize, cols: usize) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Tensor::zeros(&[n, c, rows, cols]);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..rows {
                for j in 0..cols {
                    // y lies in [floor(iH/R), floor((i+1)H/R)) iff iH < (y+1)R and (y+1)R <= (i+1)H
                    let ys: Vec<usize> = (0..h).filter(|&y| i * h < (y + 1) * rows && (y + 1) * rows <= (i + 1) * h).collect();
                    let xs: Vec<usize> = (0..w).filter(|&x| j * w < (x + 1) * cols && (x + 1) * cols <= (j + 1) * w).collect();
                    let mut acc = 0.0;
                    for &y in &ys {
                        for &xx in &xs {
                            acc += x.at4(b, ch, y, xx);
                        }
                    }
                    out.set4(b, ch, i, j, acc / (ys.len() * xs.len()) as f64);
                }
            }
        }
    }
    out
}
