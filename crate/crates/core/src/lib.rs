//! HydroTrace: a dual-attention depthwise ConvLSTM for gridded streamflow
//! prediction, with the preprocessing, training, evaluation and attention
//! analytics around it.
//!
//! Module map:
//!
//! - [`tensor`]: `f64` tensors, same/valid convolution, activations, `HTT1` files
//! - [`grid`]: gridded series, imputation, windows, split
//! - [`model`]: parameters, forward/backward, attention extraction, `HTM1` checkpoints
//! - [`training`]: losses, Adam, plateau schedule, random search
//! - [`metrics`]: NSE, PBIAS, RSR, R² and performance ratings
//! - [`analytics`]: monthly/seasonal attention aggregates, maps, masks, exports
//! - [`synthetic`]: datasets with planted feature/region/lag structure

pub mod analytics;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
