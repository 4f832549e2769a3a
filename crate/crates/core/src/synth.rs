//! Turns an orchard spec and a camera ring into RGB, binary-mask and
//! multi-class datasets.

use serde::{Deserialize, Serialize};

use crate::camera::{make_ring_poses, CameraFrame, Intrinsics, RingSpec};
use crate::dataset::{Dataset, DatasetKind, Frame};
use crate::error::Result;
use crate::image::{quantize, Image};
use crate::scene::{default_class_levels, generate_orchard, ray_trace_view, OrchardSpec, RenderMode, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRig {
    pub n_views: usize,
    pub ring_radius: f64,
    pub ring_height: f64,
    pub lookat: [f64; 3],
    pub azimuth_offset_deg: f64,
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            n_views: 44,
            ring_radius: 2.8,
            ring_height: 0.6,
            lookat: [0.0, 0.0, 0.0],
            azimuth_offset_deg: 0.0,
            width: 64,
            height: 64,
            hfov_deg: 45.0,
            near: 1.6,
            far: 4.0,
        }
    }
}

impl CameraRig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.n_views < 2 {
            p.push("cameras.n_views must be at least 2".to_string());
        }
        if self.width == 0 || self.height == 0 {
            p.push("cameras.width and cameras.height must be positive".to_string());
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            p.push("cameras.hfov_deg must lie in (0, 180)".to_string());
        }
        if !(self.near > 0.0 && self.near < self.far) {
            p.push("cameras.near/far must satisfy 0 < near < far".to_string());
        }
        if !(self.ring_radius > 0.0) {
            p.push("cameras.ring_radius must be positive".to_string());
        }
        p
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_fov(self.width, self.height, self.hfov_deg)
    }

    pub fn poses(&self) -> Result<Vec<CameraFrame>> {
        let ring = RingSpec {
            n_views: self.n_views,
            radius: self.ring_radius,
            height: self.ring_height,
            lookat: self.lookat,
            azimuth_offset_deg: self.azimuth_offset_deg,
        };
        make_ring_poses(&ring, self.intrinsics(), self.near, self.far)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scene: Scene,
    pub rgb: Dataset,
    pub mask: Dataset,
    pub multiclass: Dataset,
}

/// Rounds every value to the 8-bit grid used on disk, so an in-memory RGB
/// dataset equals its saved form. Mask values are exact levels already.
fn quantized(img: Image) -> Image {
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    Image::from_bytes(img.width, img.height, img.channels, &bytes)
}

/// Multi-class levels use `k / K` for fruit class `k`.
pub fn synthesize(spec: &OrchardSpec, rig: &CameraRig) -> Result<SynthOutput> {
    let scene = generate_orchard(spec)?;
    let cams = rig.poses()?;
    let classes = scene.fruit_count();
    let targets = (1..=classes as u32).collect();
    let levels = default_class_levels(classes);
    let bg = scene.background_albedo;
    let render = |mode: &RenderMode| -> Vec<Frame> {
        cams.iter()
            .map(|c| {
                let image = ray_trace_view(&scene, c, mode);
                Frame {
                    camera: c.clone(),
                    image: if matches!(mode, RenderMode::Rgb) { quantized(image) } else { image },
                }
            })
            .collect()
    };
    let rgb = Dataset::new(DatasetKind::Rgb, render(&RenderMode::Rgb), Vec::new(), [bg; 3])?;
    let mask = Dataset::new(DatasetKind::BinaryMask, render(&RenderMode::Mask(targets)), Vec::new(), [0.0; 3])?;
    let multiclass = Dataset::new(
        DatasetKind::MulticlassMask,
        render(&RenderMode::Multiclass(levels.clone())),
        levels,
        [0.0; 3],
    )?;
    Ok(SynthOutput {
        scene,
        rgb,
        mask,
        multiclass,
    })
}
