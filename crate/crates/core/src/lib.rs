//! Point-cloud anomaly detection from fused geometric and rendered-image features.
//!
//! A scan becomes per-point features in [`pipeline::Extractor`]; normal scans
//! fill a [`detect::MemoryBank`]; test points are scored by their squared
//! distance to the nearest bank row. See the crate examples for each stage.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

mod atomic;
pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod feat2d;
pub mod feat3d;
pub mod features;
pub mod fusion;
pub mod heatmap;
pub mod pcd;
pub mod pipeline;
pub mod preprocess;
pub mod render;
pub mod synthetic;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, Modality};
