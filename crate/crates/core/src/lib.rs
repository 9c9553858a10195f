//! Adversarial data augmentation for cross-domain presentation attack detection.

pub mod advgen;
pub mod backbone;
pub mod candidates;
pub mod checkpoint;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
mod error;
pub mod pad;
pub mod pipeline;
pub mod pixels;
pub mod plot;
pub mod seed;
pub mod selection;
pub mod transform;

pub use error::{Error, Result};
