//! Rationale-augmented visual question answering at desk scale.
//!
//! The crate is generic over the floating-point element type; the aliases
//! below pin the common `f64` instantiation used by training and evaluation.

pub mod data;
pub mod error;
pub mod evalmetrics;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod strategies;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Tape64 = numerics::Tape<f64>;
pub type Model = model::MedThinkModel<f64>;
pub type Model32 = model::MedThinkModel<f32>;
