//! Delivery-event detection for doorbell-style cameras.
//!
//! The pipeline: a per-pixel mixture-of-Gaussians background model turns raw
//! frames into foreground blobs, blobs are tracked by centroid distance, and
//! tracks that satisfy active-time and movement-variance criteria become
//! motion events. Events are cropped to fixed-size thumbnails, sampled into
//! 16-frame clips and classified by a 3D MobileNetV2 trained with a
//! training-only excitation layer and an evidential (Dirichlet) objective
//! that yields a per-prediction uncertainty score.
//!
//! Modules map onto the pipeline stages:
//! - [`motion`]: background model, blob extraction, tracking, event triggers
//! - [`data`]: IoU labeling, camera-disjoint splits, clip sampling/augmentation
//! - [`nn`]: 3D CNN layers, the MobileNetV2 backbone, excitation, FLOPs accounting
//! - [`evidential`]: evidence head math, losses, schedules, AvU
//! - [`train`]: AdamW loop with warmup/decay, excitation and loss schedules
//! - [`eval`]: video aggregation, PR/mAP, uncertainty filtering
//! - [`synth`]: deterministic synthetic-scene corpus generator

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod evidential;
pub mod geometry;
pub mod imaging;
pub mod manifest;
pub mod motion;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
