//! Motion synthesis toolkit for arbitrary skeletal rigs.
//!
//! The crate covers the whole data path: BVH ingestion and normalization,
//! rig augmentation with retargeting, skeleton-aware positional encodings, a
//! factorized spatial-temporal diffusion denoiser and window-based motion
//! metrics.

pub mod augment;
pub mod bvh;
pub mod denoiser;
pub mod encodings;
pub mod metrics;
pub mod nn;
pub mod skeleton;
pub mod synthetic;
