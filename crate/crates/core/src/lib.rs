//! Weakly supervised video anomaly scoring with a self-attention pooled
//! classifier over precomputed segment features.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used for training.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod ndcore;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Frames covered by one feature segment.
pub const FRAMES_PER_SEGMENT: usize = 16;

pub type Matrix64 = ndcore::Matrix<f64>;
pub type Matrix32 = ndcore::Matrix<f32>;
pub type Tape64 = ndcore::Tape<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type AttentionMap64 = model::AttentionMap<f64>;
pub type RAdamState64 = optim::RAdamState<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type TrainingSet64 = data::TrainingSet<f64>;
pub type ScoreSeries64 = infer::ScoreSeries<f64>;
