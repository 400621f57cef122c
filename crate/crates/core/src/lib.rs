//! LSTM caption generation with supervised domain adaptation.
//!
//! The output layer of an augmented model is split into a shared part and one
//! part per domain, `w_d = θ_g + θ_d`. Training minimizes a convex upper bound
//! of the cross-entropy of the composed weights,
//! `−θ_g,yᵀh + ½ lse(2θ_g h) − θ_d,yᵀh + ½ lse(2θ_d h)`,
//! which keeps the two parts from collapsing into one. Evaluation uses the
//! composed weights.
//!
//! Numeric code is generic over [`Scalar`] (`f64` or `f32`); the aliases
//! below fix the precision for everyday use.

pub mod config;
pub mod data;
pub mod decode;
pub mod error;
pub mod experiment;
pub mod feataug;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mat64 = math::Matrix<f64>;
pub type Mat32 = math::Matrix<f32>;
pub type Model = model::ModelParams<f64>;
pub type Model32 = model::ModelParams<f32>;
pub type Adam = optim::AdamState<f64>;
pub type Adam32 = optim::AdamState<f32>;
