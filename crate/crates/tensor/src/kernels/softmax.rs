//! Softmax across a stack of equally shaped tensors (one per modality), evaluated
//! independently at every coordinate.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Returns the weights stacked along a new leading modality axis.
pub fn modality_softmax_forward<T: Real>(logits: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if logits.len() < 2 {
        return Err(TensorError::InvalidArgument {
            op: "modality_softmax",
            reason: format!("needs at least two modalities, got {}", logits.len()),
        });
    }
    let shape = logits[0].shape();
    for (m, t) in logits.iter().enumerate().skip(1) {
        if t.shape() != shape {
            return Err(TensorError::InvalidArgument {
                op: "modality_softmax",
                reason: format!("modality {m} has shape {:?}, expected {:?}", t.shape(), shape),
            });
        }
    }
    let len = logits[0].len();
    let m = logits.len();
    let mut peak = logits[0].data().to_vec();
    for t in &logits[1..] {
        for (p, &v) in peak.iter_mut().zip(t.data()) {
            *p = p.max(v);
        }
    }
    let mut out = vec![T::zero(); m * len];
    let mut total = vec![T::zero(); len];
    for (k, t) in logits.iter().enumerate() {
        let dst = &mut out[k * len..(k + 1) * len];
        for (((o, s), &v), &p) in dst.iter_mut().zip(&mut total).zip(t.data()).zip(&peak) {
            *o = (v - p).exp();
            *s += *o;
        }
    }
    for chunk in out.chunks_mut(len) {
        for (o, &s) in chunk.iter_mut().zip(&total) {
            *o /= s;
        }
    }
    let mut stacked_shape = vec![m];
    stacked_shape.extend_from_slice(shape);
    Tensor::new(stacked_shape, out)
}

/// Adjoint of the modality softmax.
///
/// Uses `dx_k = w_k * sum_m w_m (g_k - g_m)`, which equals the usual
/// `w_k (g_k - sum_m w_m g_m)` because the weights sum to one, and is exactly zero
/// whenever the incoming gradients agree across modalities.
pub fn modality_softmax_backward<T: Real>(weights: &Tensor<T>, grads: &[Option<&Tensor<T>>]) -> Vec<Tensor<T>> {
    let m = weights.shape()[0];
    let inner_shape = weights.shape()[1..].to_vec();
    let len: usize = inner_shape.iter().product();
    let w = weights.data();
    let zeros = vec![T::zero(); len];
    let g: Vec<&[T]> = grads.iter().map(|g| g.map_or(&zeros[..], |t| t.data())).collect();
    let mut out: Vec<Vec<T>> = vec![vec![T::zero(); len]; m];
    for (k, dst) in out.iter_mut().enumerate() {
        for j in (0..m).filter(|&j| j != k) {
            let wj = &w[j * len..(j + 1) * len];
            for (((d, &wv), &gk), &gj) in dst.iter_mut().zip(wj).zip(g[k]).zip(g[j]) {
                *d += wv * (gk - gj);
            }
        }
        for (d, &wk) in dst.iter_mut().zip(&w[k * len..(k + 1) * len]) {
            *d *= wk;
        }
    }
    out.into_iter()
        .map(|d| Tensor::new(inner_shape.clone(), d).expect("softmax gradient shape"))
        .collect()
}
