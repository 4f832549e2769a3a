//! Radiance-field 3D segmentation by two-stage fine-tuning.
//!
//! A vanilla frequency-encoded field is first fit to posed RGB images, then
//! fine-tuned on binary (or intensity-coded multi-class) masks presented as
//! RGB targets, with the same renderer, loss and architecture. Segmented point
//! clouds are read directly from the refined field and fed to a
//! DBSCAN-based counting pipeline. Two baselines are included for
//! comparison: density-threshold mask back-projection and a joint model with
//! an extra mask head trained with an RGB + BCE objective.

pub mod analytic;
pub mod camera;
pub mod checkpoint;
pub mod cloud;
pub mod cluster;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod extract;
pub mod field;
pub mod fsutil;
pub mod image;
pub mod pipeline;
pub mod ply;
pub mod render;
pub mod scalar;
pub mod scene;
pub mod synth;
pub mod train;

pub use camera::{make_ring_poses, CameraFrame, Intrinsics};
pub use checkpoint::{Checkpoint, Stage};
pub use dataset::{Dataset, DatasetKind};
pub use error::{Error, Result};
pub use field::{FieldConfig, FieldOutput, FieldParams, HeadType};
pub use image::Image;
pub use render::{Ray, RenderConfig};
pub use scene::{OrchardSpec, Scene};

/// 3-vector used for all geometry.
pub type Vec3 = nalgebra::Vector3<f64>;
