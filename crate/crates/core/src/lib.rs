//! Detection, separation and classification of insects in sticky-trap images.
//!
//! The pipeline runs curvature-saliency contour detection, clusters contour
//! shapes into noise, single insects and touching groups, splits touching
//! groups by seeded watershed, and classifies every single insect with a
//! polynomial-kernel SVM over Histogram-of-Curviness-Saliency descriptors.

pub mod clustering;
pub mod components;
pub mod dataset;
pub mod error;
pub mod hcs;
pub mod imaging;
pub mod pipeline;
pub mod raster;
pub mod separation;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BoundingBox, GrayImage, Mask};
