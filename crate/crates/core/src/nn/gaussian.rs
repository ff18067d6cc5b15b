use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::scalar::Real;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian with a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GaussianHead<T: Real> {
    pub log_std: Vec<T>,
}

impl<T: Real> GaussianHead<T> {
    pub fn new(dim: usize, init_log_std: T) -> Self {
        Self {
            log_std: vec![init_log_std; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.log_std.len()
    }

    fn clamped(&self, i: usize) -> T {
        self.log_std[i].max(T::of(LOG_STD_MIN)).min(T::of(LOG_STD_MAX))
    }

    pub fn std(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.clamped(i).exp()).collect()
    }

    /// Keeps the stored values inside the admissible range.
    pub fn clamp_in_place(&mut self) {
        for i in 0..self.dim() {
            self.log_std[i] = self.clamped(i);
        }
    }

    pub fn log_prob(&self, mean: &[T], action: &[T]) -> Result<T> {
        check_len("Gaussian mean", self.dim(), mean.len())?;
        check_len("Gaussian action", self.dim(), action.len())?;
        let half_log_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        let mut lp = T::zero();
        for i in 0..self.dim() {
            let ls = self.clamped(i);
            let z = (action[i] - mean[i]) / ls.exp();
            lp -= T::of(0.5) * z * z + ls + half_log_2pi;
        }
        Ok(lp)
    }

    /// Entropy `Σ (log σ + ½ ln 2πe)`.
    pub fn entropy(&self) -> T {
        let c = T::of(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln());
        (0..self.dim()).map(|i| self.clamped(i) + c).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[T], rng: &mut R) -> Result<(Vec<T>, T)> {
        check_len("Gaussian mean", self.dim(), mean.len())?;
        let action: Vec<T> = (0..self.dim())
            .map(|i| {
                let e: f64 = StandardNormal.sample(rng);
                mean[i] + self.clamped(i).exp() * T::of(e)
            })
            .collect();
        let lp = self.log_prob(mean, &action)?;
        Ok((action, lp))
    }

    /// `∂ log p / ∂ mean` and `∂ log p / ∂ log_std` at one sample.
    pub fn log_prob_grads(&self, mean: &[T], action: &[T], d_mean: &mut [T], d_log_std: &mut [T]) {
        for i in 0..self.dim() {
            let ls = self.clamped(i);
            let var = (ls + ls).exp();
            let diff = action[i] - mean[i];
            d_mean[i] = diff / var;
            d_log_std[i] = if self.log_std[i] == ls {
                diff * diff / var - T::one()
            } else {
                T::zero()
            };
        }
    }

    /// `∂ entropy / ∂ log_std`: one inside the clamp range, zero outside.
    pub fn entropy_grad(&self, i: usize) -> T {
        if self.log_std[i] == self.clamped(i) {
            T::one()
        } else {
            T::zero()
        }
    }
}

pub fn gaussian_sample<T: Real, R: Rng + ?Sized>(head: &GaussianHead<T>, mean: &[T], rng: &mut R) -> Result<(Vec<T>, T)> {
    head.sample(mean, rng)
}

pub fn gaussian_log_prob<T: Real>(head: &GaussianHead<T>, mean: &[T], action: &[T]) -> Result<T> {
    head.log_prob(mean, action)
}
