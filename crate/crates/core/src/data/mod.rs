//! Synthetic scenes, raster files and dataset manifests.

pub mod crop;
pub mod manifest;
pub mod sipr;
pub mod synth;

pub use crop::{crop_pair, random_crop_pair};
pub use manifest::{generate_dataset, load_scene, Dataset, Manifest, ManifestEntry};
pub use sipr::{BitDepth, SiprError, SiprRaster};
pub use synth::{generate_scene, render_scene, OffsetField, SceneConfig, SceneMeta, ScenePair};
