//! Pinhole-to-panoramic unsupervised domain adaptation for semantic
//! segmentation: data pipeline, network, attention blocks, adaptation
//! modules, training loop and evaluation.

pub mod attention;
pub mod damods;
pub mod datapipe;
pub mod error;
pub mod evalkit;
pub mod losses;
pub mod nn;
pub mod segnet;
pub mod trainer;

pub use error::{Error, Result};
pub use panoda_tensor as tensor;
