//! Alignment-aware pan-sharpening: the network, its objective, quality
//! metrics, synthetic data and training.

pub mod data;
pub mod error;
pub mod evaluate;
pub mod fam;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod params;
pub mod psm;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{ModelConfig, Network, Variant};
