//! Elementwise detection losses with masked, normalized reductions.

use crate::real::Real;

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Sigmoid focal loss of one logit and its `{0,1}` target, with its derivative.
///
/// `FL = -alpha_t (1 - p_t)^gamma ln p_t`, written through `z = ±x` so that
/// `ln p_t = -softplus(-z)`.
pub fn focal_term<T: Real>(logit: T, target: T, alpha: T, gamma: T) -> (T, T) {
    let positive = target > T::of(0.5);
    let (sign, alpha_t) = if positive {
        (T::one(), alpha)
    } else {
        (-T::one(), T::one() - alpha)
    };
    let z = sign * logit;
    let e = (-z.abs()).exp();
    let nll = (-z).max(T::zero()) + e.ln_1p();
    let r = T::one() / (T::one() + e);
    let (p_t, q) = if z >= T::zero() { (r, e * r) } else { (e * r, r) };
    let q_gamma = if gamma == T::of(2.0) { q * q } else { q.powf(gamma) };
    let loss = alpha_t * q_gamma * nll;
    let dz = -alpha_t * q_gamma * (gamma * p_t * nll + q);
    (loss, sign * dz)
}

/// Huber loss of one residual and its derivative.
pub fn huber_term<T: Real>(residual: T, delta: T) -> (T, T) {
    let a = residual.abs();
    if a <= delta {
        (T::of(0.5) * residual * residual, residual)
    } else {
        (delta * (a - T::of(0.5) * delta), delta * residual.signum())
    }
}
