//! Fully connected networks with hand-written reverse mode, Adam, and a
//! diagonal Gaussian action head.

mod adam;
pub mod checkpoint;
mod gaussian;
mod mlp;
mod normalizer;

pub use adam::{adam_step, AdamState};
pub use gaussian::{gaussian_log_prob, gaussian_sample, GaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{
    mlp_backward, mlp_forward, orthogonal, Activation, Mlp, MlpCache, MlpGrads, MlpSpec,
    DEFAULT_HIDDEN,
};
pub use normalizer::RunningNorm;
