//! Simulated robot-arm catching with a multi-fingered hand, perceived only
//! through pixel-level bounding-box features, trained with heterogeneous
//! multi-agent PPO.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod env;
pub mod error;
pub mod geometry;
pub mod marl;
pub mod nn;
pub mod oracle;
pub mod scalar;
pub mod sim;
pub mod vision;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations.
pub type EnvConfigF64 = env::EnvConfig<f64>;
pub type CatchEnvF64 = env::CatchEnv<f64>;
pub type BatchEnvF64 = env::BatchEnv<f64>;
pub type MlpF64 = nn::Mlp<f64>;
pub type TrainerConfigF64 = marl::TrainerConfig<f64>;
pub type TrainerF64 = marl::Trainer<f64>;

/// Single-precision instantiations, the default for training.
pub type EnvConfigF32 = env::EnvConfig<f32>;
pub type CatchEnvF32 = env::CatchEnv<f32>;
pub type BatchEnvF32 = env::BatchEnv<f32>;
pub type MlpF32 = nn::Mlp<f32>;
pub type TrainerConfigF32 = marl::TrainerConfig<f32>;
pub type TrainerF32 = marl::Trainer<f32>;
