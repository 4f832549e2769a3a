//! Point clouds from trained fields: dense-grid extraction from a
//! mask-fine-tuned field, the density-threshold back-projection baseline and
//! multi-class labelling by field colour.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Stage};
use crate::cloud::{LabeledPointCloud, SourceTag};
use crate::dataset::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::render::{pixel_to_ray, sample_ray, RadianceField, RenderConfig};
use crate::Vec3;

/// Points per field query while sweeping the grid.
const GRID_CHUNK: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    pub grid_resolution: [usize; 3],
    pub density_threshold: f64,
    pub sa3d_density_threshold: f64,
    pub voxel_dedupe_leaf: f64,
    pub sa3d_samples_per_ray: usize,
    /// Cells whose mean field colour along the canonical direction falls
    /// below this are dropped; 0 disables the filter.
    pub color_threshold: f64,
    /// Query direction for colours; the pipeline fills it from the training
    /// cameras when unset, `+y` otherwise.
    pub canonical_direction: Option<[f64; 3]>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            bounds_min: [-1.0; 3],
            bounds_max: [1.0; 3],
            grid_resolution: [160; 3],
            density_threshold: 5.0,
            sa3d_density_threshold: 5.0,
            voxel_dedupe_leaf: 0.01,
            sa3d_samples_per_ray: 64,
            color_threshold: 0.5,
            canonical_direction: None,
        }
    }
}

impl ExtractConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.grid_resolution.iter().any(|&r| r < 2) {
            p.push("extract.grid_resolution must be at least 2 per axis".to_string());
        }
        if (0..3).any(|i| !(self.bounds_min[i] < self.bounds_max[i])) {
            p.push("extract.bounds_min must lie below extract.bounds_max on every axis".to_string());
        }
        if !(self.density_threshold > 0.0) {
            p.push("extract.density_threshold must be positive".to_string());
        }
        if !(self.sa3d_density_threshold > 0.0) {
            p.push("extract.sa3d_density_threshold must be positive".to_string());
        }
        if !(self.voxel_dedupe_leaf > 0.0) {
            p.push("extract.voxel_dedupe_leaf must be positive".to_string());
        }
        if self.sa3d_samples_per_ray < 2 {
            p.push("extract.sa3d_samples_per_ray must be at least 2".to_string());
        }
        if !(0.0..=1.0).contains(&self.color_threshold) {
            p.push("extract.color_threshold must lie in [0, 1]".to_string());
        }
        if self.canonical_direction.is_some_and(|d| Vec3::from(d).norm() < 1e-12) {
            p.push("extract.canonical_direction must be non-zero".to_string());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn direction(&self) -> [f32; 3] {
        let d = Vec3::from(self.canonical_direction.unwrap_or([0.0, 1.0, 0.0])).normalize();
        [d.x as f32, d.y as f32, d.z as f32]
    }

    /// Centre of grid cell `(i, j, k)`.
    pub fn cell_center(&self, idx: [usize; 3]) -> Vec3 {
        let c = |a: usize| {
            let h = (self.bounds_max[a] - self.bounds_min[a]) / self.grid_resolution[a] as f64;
            self.bounds_min[a] + (idx[a] as f64 + 0.5) * h
        };
        Vec3::new(c(0), c(1), c(2))
    }
}

/// Direction from `center` toward the mean camera position of `dataset`.
pub fn canonical_direction(dataset: &Dataset, center: Vec3) -> Result<[f64; 3]> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean = dataset.frames.iter().map(|f| f.camera.center()).sum::<Vec3>() / dataset.len() as f64;
    let d = mean - center;
    if d.norm() < 1e-9 {
        return Err(Error::InvalidArgument("mean camera position coincides with the scene centre".into()));
    }
    let d = d.normalize();
    Ok([d.x, d.y, d.z])
}

fn mean_channel(rgb: &[f32], i: usize) -> f64 {
    (rgb[3 * i] as f64 + rgb[3 * i + 1] as f64 + rgb[3 * i + 2] as f64) / 3.0
}

/// Grid cells of `field` with density above the threshold (and, when
/// enabled, a bright enough colour), in x-fastest raster order.
pub fn extract_field<F: RadianceField + Sync + ?Sized>(field: &F, config: &ExtractConfig) -> Result<LabeledPointCloud> {
    config.validate()?;
    let [rx, ry, rz] = config.grid_resolution;
    let total = rx * ry * rz;
    let dir = config.direction();
    let tau = config.density_threshold;
    let chunks: Vec<Vec<Vec3>> = (0..total.div_ceil(GRID_CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * GRID_CHUNK..((c + 1) * GRID_CHUNK).min(total);
            let centers: Vec<Vec3> = range
                .map(|i| config.cell_center([i % rx, (i / rx) % ry, i / (rx * ry)]))
                .collect();
            let pts: Vec<[f32; 3]> = centers.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
            let sigma = field.density(&pts);
            let dense: Vec<usize> = (0..pts.len()).filter(|&i| sigma[i] as f64 > tau).collect();
            if dense.is_empty() || config.color_threshold <= 0.0 {
                return dense.into_iter().map(|i| centers[i]).collect();
            }
            let sel: Vec<[f32; 3]> = dense.iter().map(|&i| pts[i]).collect();
            let out = field.query(&sel, &vec![dir; sel.len()]);
            dense
                .iter()
                .enumerate()
                .filter(|&(j, _)| mean_channel(&out.rgb, j) >= config.color_threshold)
                .map(|(_, &i)| centers[i])
                .collect()
        })
        .collect();
    let points: Vec<Vec3> = chunks.into_iter().flatten().collect();
    if points.is_empty() {
        log::warn!("grid extraction found no cells above density {tau}");
    }
    Ok(LabeledPointCloud::from_points(points, SourceTag::Invnerf))
}

/// Grid extraction from a mask-fine-tuned checkpoint.
pub fn extract_grid(checkpoint: &Checkpoint, config: &ExtractConfig) -> Result<LabeledPointCloud> {
    checkpoint.require_stage(Stage::Stage2Mask)?;
    extract_field(&checkpoint.params, config)
}

fn voxel_key(p: &Vec3, leaf: f64) -> [i64; 3] {
    [
        (p.x / leaf).floor() as i64,
        (p.y / leaf).floor() as i64,
        (p.z / leaf).floor() as i64,
    ]
}

/// Marches every foreground ray of `masks` through `field` and keeps the
/// samples with density above `sa3d_density_threshold`, one per voxel of
/// `voxel_dedupe_leaf` (the first in frame, pixel, depth order). Output is
/// sorted by voxel key.
pub fn backproject_field<F: RadianceField + Sync + ?Sized>(
    field: &F,
    masks: &Dataset,
    bounds: (f64, f64),
    config: &ExtractConfig,
) -> Result<LabeledPointCloud> {
    config.validate()?;
    if masks.kind != DatasetKind::BinaryMask {
        return Err(Error::InvalidArgument(format!(
            "back-projection needs a binary mask dataset, got {:?}",
            masks.kind
        )));
    }
    let render = RenderConfig {
        samples_per_ray: config.sa3d_samples_per_ray,
        jitter: false,
        background: [0.0; 3],
    };
    let tau = config.sa3d_density_threshold;
    let per_frame: Vec<Vec<Vec3>> = masks
        .frames
        .par_iter()
        .map(|frame| {
            let cam = &frame.camera;
            let mut pts = Vec::new();
            for py in 0..cam.height() {
                for px in 0..cam.width() {
                    if frame.image.pixel(px, py)[0] < 0.5 {
                        continue;
                    }
                    let mut ray = pixel_to_ray(cam, px, py);
                    ray.near = bounds.0;
                    ray.far = bounds.1;
                    let (t, _) = sample_ray(&ray, &render, None);
                    let samples: Vec<Vec3> = t.iter().map(|&ti| ray.at(ti)).collect();
                    let q: Vec<[f32; 3]> = samples.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
                    let sigma = field.density(&q);
                    pts.extend(samples.iter().zip(&sigma).filter(|(_, &s)| s as f64 > tau).map(|(p, _)| *p));
                }
            }
            pts
        })
        .collect();
    let mut voxels: BTreeMap<[i64; 3], Vec3> = BTreeMap::new();
    for p in per_frame.into_iter().flatten() {
        voxels.entry(voxel_key(&p, config.voxel_dedupe_leaf)).or_insert(p);
    }
    Ok(LabeledPointCloud::from_points(voxels.into_values().collect(), SourceTag::Sa3d))
}

/// Density-threshold back-projection from an RGB checkpoint; the checkpoint
/// is only read.
pub fn sa3d_backproject(checkpoint: &Checkpoint, masks: &Dataset, config: &ExtractConfig) -> Result<LabeledPointCloud> {
    checkpoint.require_stage(Stage::Stage1Rgb)?;
    if let Some(f) = masks
        .frames
        .iter()
        .find(|f| f.camera.near != checkpoint.near || f.camera.far != checkpoint.far)
    {
        return Err(Error::BoundsMismatch(format!(
            "mask frame bounds ({}, {}) differ from the checkpoint's ({}, {})",
            f.camera.near, f.camera.far, checkpoint.near, checkpoint.far
        )));
    }
    backproject_field(&checkpoint.params, masks, (checkpoint.near, checkpoint.far), config)
}

/// Nearest entry of `{0} ∪ levels` to `value`, as a class id (0 = none).
pub fn snap_level(value: f64, levels: &[f32]) -> u32 {
    let mut best = (value.abs(), 0u32);
    for (k, &l) in levels.iter().enumerate() {
        let d = (value - l as f64).abs();
        if d < best.0 {
            best = (d, k as u32 + 1);
        }
    }
    best.1
}

/// Class of each point from the mean field colour along `direction`.
pub fn classify_field<F: RadianceField + ?Sized>(field: &F, points: &[Vec3], levels: &[f32], direction: [f32; 3]) -> Result<Vec<u32>> {
    crate::dataset::validate_levels(levels)?;
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let q: Vec<[f32; 3]> = points.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect();
    let mut labels = Vec::with_capacity(points.len());
    for chunk in q.chunks(GRID_CHUNK) {
        let out = field.query(chunk, &vec![direction; chunk.len()]);
        labels.extend((0..chunk.len()).map(|i| snap_level(mean_channel(&out.rgb, i), levels)));
    }
    Ok(labels)
}

/// Labels from a multi-class fine-tuned checkpoint, one per point.
pub fn classify_multiclass(checkpoint: &Checkpoint, points: &[Vec3], levels: &[f32], direction: [f32; 3]) -> Result<Vec<u32>> {
    checkpoint.require_stage(Stage::Stage2Mask)?;
    classify_field(&checkpoint.params, points, levels, direction)
}

/// Copy of `cloud` labelled by `labels`, without the label-0 points.
pub fn apply_labels(cloud: &LabeledPointCloud, labels: &[u32]) -> Result<LabeledPointCloud> {
    if labels.len() != cloud.len() {
        return Err(Error::Shape(format!("{} labels for {} points", labels.len(), cloud.len())));
    }
    let mut out = LabeledPointCloud::new(cloud.source);
    for i in (0..cloud.len()).filter(|&i| labels[i] != 0) {
        out.push(cloud.points[i], labels[i], cloud.cluster_ids[i]);
    }
    Ok(out)
}
