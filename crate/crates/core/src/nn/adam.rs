use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamState<T: Real> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub lr: T,
    /// Updates skipped because of non-finite gradients.
    pub skipped: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            lr,
            skipped: 0,
        }
    }

    /// One bias-corrected Adam update. Returns `false` (and leaves the
    /// parameters untouched) when a gradient is not finite.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> Result<bool> {
        check_len("Adam parameters", self.m.len(), params.len())?;
        check_len("Adam gradients", self.m.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            self.skipped += 1;
            return Ok(false);
        }
        self.step += 1;
        let t = self.step as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        let step_size = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            params[i] -= step_size * self.m[i] / (self.v[i].sqrt() / c2_sqrt + self.eps);
        }
        Ok(true)
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<bool> {
    state.update(params, grads)
}
