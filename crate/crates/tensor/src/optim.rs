use crate::error::{check_extent, Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::InvalidArgument {
                op: "adam_step",
                reason: format!("invalid hyperparameters {self:?}"),
            })
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Zero-initialized first/second moment accumulators, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let first: Vec<_> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second = first.clone();
        Self { first, second, step: 0 }
    }
}

/// One bias-corrected Adam update. A `None` gradient is treated as zero.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[Option<&Tensor<T>>],
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    config.validate()?;
    check_extent("adam_step", "parameter count", params.len(), grads.len())?;
    check_extent("adam_step", "state size", params.len(), state.first.len())?;
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(g) = g {
            check_extent("adam_step", format!("param {i} length"), p.len(), g.len())?;
        }
        check_extent("adam_step", format!("state {i} length"), p.len(), state.first[i].len())?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::of(config.lr), T::of(config.eps));
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = grads[i].map_or(T::zero(), |g| g.data()[j]);
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
