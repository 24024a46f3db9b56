//! Evaluation toolkit for 68-point facial landmark models: dataset I/O,
//! NME/FR/AUC metrics, detection AP, augmentation transforms, exact t-SNE
//! and report rendering.

pub mod augment;
pub mod dataset;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod report;
pub mod tsne;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, LandmarkSet, NormalizationKind, Point2, NUM_LANDMARKS};
