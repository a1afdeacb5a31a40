//! Synthetic object-detection datasets from single-object images.
//!
//! - [`annotate`]: mask-derived boxes for single-object photos.
//! - [`composer`]: copy-paste composition with occlusion-aware pruning.
//! - [`augment`]: seeded online augmentation pipelines.
//! - [`eval`]: AP, false positives on negative images, confusion matrices.
//! - [`coco`]: canonical COCO reading and writing.
//! - [`cli`]: the commands behind the `cpsynth` binary.

pub mod annotate;
pub mod augment;
pub mod cli;
pub mod coco;
pub mod composer;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod filters;
pub mod geometry;
pub mod mask;
pub mod raster;
pub mod rng;
pub mod transform;

pub use dataset::{AnnotatedObject, Category, Dataset, ImageRecord, Source, Split};
pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox};
pub use mask::BinaryMask;
pub use raster::{ColorMode, Raster};
